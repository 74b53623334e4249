//! Command implementations shared by the `pfca` binary and the test suite.
//!
//! Exit-code contract: 0 success, 2 usage/config errors, 3 data errors,
//! 4 numerical failures.

mod commands;
mod gradcheck;

pub use commands::{
    build_task_data, cmd_compare, cmd_count, cmd_eval_sr, cmd_train, parse_input_shape,
    parse_model_name, CountArgs, EvalSrArgs, TrainArgs,
};
pub use gradcheck::{
    run_gradcheck, FaultInjection, GradCheckModule, OpReport, GRADCHECK_EPSILON,
    GRADCHECK_TOLERANCE,
};

use crate::error::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

/// Maps an error to the stable scripting exit code.
pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::UnsupportedModel(_) => EXIT_USAGE,
        Error::Data(_) | Error::Io(_) | Error::Format { .. } | Error::Png(_) => EXIT_DATA,
        Error::NonFiniteLoss { .. } | Error::NonFinite(_) => EXIT_NUMERIC,
        _ => 1,
    }
}

/// Runs the gradient-check suite and renders the report; returns the exit
/// code (nonzero when any operator fails).
pub fn cmd_gradcheck(module: GradCheckModule, out: &mut dyn std::io::Write) -> std::io::Result<i32> {
    let reports = run_gradcheck(module, FaultInjection::None);
    let mut failed = false;
    writeln!(
        out,
        "{:<18} {:>14} {:>8} {:>8} {:>8}",
        "operator", "max rel err", "checked", "skipped", "status"
    )?;
    for r in &reports {
        writeln!(
            out,
            "{:<18} {:>14.3e} {:>8} {:>8} {:>8}",
            r.name,
            r.max_rel_error,
            r.coords_checked,
            r.coords_skipped,
            if r.passed { "ok" } else { "FAIL" }
        )?;
        failed |= !r.passed;
    }
    writeln!(
        out,
        "{} operators checked, tolerance {:.0e} (64-bit central differences, eps {:.0e})",
        reports.len(),
        GRADCHECK_TOLERANCE,
        GRADCHECK_EPSILON
    )?;
    Ok(if failed { EXIT_NUMERIC } else { EXIT_OK })
}
