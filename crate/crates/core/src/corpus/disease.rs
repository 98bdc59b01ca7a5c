use super::CorpusError;

/// Posteriors of a binary disease state `θ` split between its prior
/// (`pa = (1−π, π)`) and a single test result `y` under a uniform reference
/// prior. `s` and `t` are the test's sensitivity and specificity.
pub fn build_disease_test(pi: f64, s: f64, t: f64, y: u8) -> Result<(Vec<f64>, Vec<f64>), CorpusError> {
    for (name, value) in [("s", s), ("t", t)] {
        if !(value > 0.0 && value < 1.0) {
            return Err(CorpusError::BoundaryProbability { name, value });
        }
    }
    // π itself may sit on the boundary: a certain prior is a legitimate input
    if !(0.0..=1.0).contains(&pi) {
        return Err(CorpusError::BoundaryProbability { name: "pi", value: pi });
    }
    let pa = vec![1.0 - pi, pi];
    let pb = match y {
        1 => vec![(1.0 - t) / (s + 1.0 - t), s / (s + 1.0 - t)],
        0 => vec![t / (t + 1.0 - s), (1.0 - s) / (t + 1.0 - s)],
        other => return Err(CorpusError::InvalidOutcome(other)),
    };
    Ok((pa, pb))
}
