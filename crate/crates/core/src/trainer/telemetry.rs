use std::io::Write;

use crate::error::Result;

use super::HistoryRow;

pub const TELEMETRY_HEADER: &str = "step,epoch,d_loss,g_loss,gp_term,grad_norm_mean,e_loss";

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// CSV rows under [`TELEMETRY_HEADER`]; absent values are empty cells.
pub fn write_telemetry(out: &mut impl Write, rows: &[HistoryRow]) -> Result<()> {
    writeln!(out, "{TELEMETRY_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.step,
            r.epoch,
            r.d_loss,
            cell(r.g_loss),
            cell(r.gp_term),
            cell(r.grad_norm_mean),
            cell(r.e_loss)
        )?;
    }
    Ok(())
}
