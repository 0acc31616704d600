use super::NocError;
use crate::ensemble::{decide, Decision, Prediction, Task};
use crate::fixed::LogitFormat;

/// Final reduction on complete raw class sums. Uses the oracle's decision rule so
/// that chip and software agree bit for bit.
pub fn coprocessor_reduce(
    sums: &[Option<i64>],
    task: Task,
    threshold_raw: i64,
    fmt: LogitFormat,
) -> Result<Prediction, NocError> {
    let raw: Vec<i64> = sums
        .iter()
        .enumerate()
        .map(|(class, s)| s.ok_or(NocError::Incomplete { class }))
        .collect::<Result<_, _>>()?;
    let decision = match task {
        Task::Regression => Decision::Value(fmt.to_f64(raw[0])),
        task => {
            let as_f64: Vec<f64> = raw.iter().map(|&s| s as f64).collect();
            decide(task, &as_f64, threshold_raw as f64)
        }
    };
    Ok(Prediction {
        logits: raw.iter().map(|&s| fmt.to_f64(s)).collect(),
        decision,
    })
}
