//! Structured metrics text: one `key=value` line per event, vectors joined
//! by commas. Floats use Rust's shortest round-trip formatting, so a
//! replayed run emits byte-identical lines.

use crate::mixture::IterationRecord;

pub fn join_f64(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| format!("{v}"))
        .collect::<Vec<_>>()
        .join(",")
}

pub fn join_usize(values: &[usize]) -> String {
    values
        .iter()
        .map(|v| format!("{v}"))
        .collect::<Vec<_>>()
        .join(",")
}

/// One step-2 iteration as a metrics line.
pub fn format_iteration(rec: &IterationRecord) -> String {
    format!(
        "step2 iter={} val_ll={} priors={} used={} skipped={}",
        rec.iteration,
        rec.val_ll,
        join_f64(&rec.priors),
        join_usize(&rec.batches_used),
        join_usize(&rec.batches_skipped)
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iteration_line_is_stable_and_parseable() {
        let rec = IterationRecord {
            iteration: 3,
            val_ll: -0.5,
            priors: vec![0.25, 0.75],
            batches_used: vec![10, 12],
            batches_skipped: vec![2, 0],
        };
        let line = format_iteration(&rec);
        assert_eq!(
            line,
            "step2 iter=3 val_ll=-0.5 priors=0.25,0.75 used=10,12 skipped=2,0"
        );
        assert_eq!(format_iteration(&rec), line);
    }
}
