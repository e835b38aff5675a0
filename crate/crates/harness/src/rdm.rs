//! Range-Doppler map export.

use std::io::Write;

use cofmcw::sensing::RangeDopplerMap;

use crate::error::Result;
use crate::sweep::format_sig9;

/// Header row: `delay_bin` then the signed Doppler of each column in Hz.
/// Each following row: the row's delay in samples, then its magnitudes.
pub fn write_rdm_csv<W: Write>(out: W, rdm: &RangeDopplerMap) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["delay_bin".to_string()];
    header.extend(rdm.doppler_axis.iter().map(|f| format_sig9(*f)));
    w.write_record(&header)?;
    for r in 0..rdm.rows {
        let mut row = vec![format_sig9(rdm.delay_axis[r])];
        row.extend((0..rdm.cols).map(|c| format_sig9(rdm.at(r, c))));
        w.write_record(&row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
