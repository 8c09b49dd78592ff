//! Convergence measures on per-iteration power traces.

pub const DEFAULT_WINDOW: usize = 500;

/// Trailing moving averages; entry `i` averages samples `i + 1 - window ..= i` and
/// exists from `i = window - 1` on.
pub fn trailing_means(trace: &[f64], window: usize) -> Vec<f64> {
    if window == 0 || trace.len() < window {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(trace.len() - window + 1);
    let mut sum: f64 = trace[..window].iter().sum();
    out.push(sum / window as f64);
    for i in window..trace.len() {
        sum += trace[i] - trace[i - window];
        out.push(sum / window as f64);
    }
    out
}

/// Mean of the last `window` samples (the whole trace if shorter).
pub fn plateau(trace: &[f64], window: usize) -> f64 {
    let w = window.clamp(1, trace.len().max(1));
    let tail = &trace[trace.len().saturating_sub(w)..];
    if tail.is_empty() {
        0.0
    } else {
        tail.iter().sum::<f64>() / tail.len() as f64
    }
}

/// First 1-based iteration at which the trailing mean reaches `level`.
pub fn iterations_to_level(trace: &[f64], level: f64, window: usize) -> Option<usize> {
    trailing_means(trace, window)
        .iter()
        .position(|&m| m >= level)
        .map(|i| i + window)
}

/// First 1-based iteration at which the trailing mean reaches `fraction` of the
/// trace's own final plateau; `None` if it never does.
pub fn convergence_iteration(trace: &[f64], fraction: f64, window: usize) -> Option<usize> {
    if trace.is_empty() {
        return None;
    }
    let w = window.clamp(1, trace.len());
    iterations_to_level(trace, fraction * plateau(trace, w), w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_trace_converges_at_window() {
        let t = vec![0.7; 2000];
        assert_eq!(convergence_iteration(&t, 0.9, 500), Some(500));
        assert_eq!(convergence_iteration(&t, 1.0, 500), Some(500));
    }

    #[test]
    fn increasing_trace_has_one_crossing() {
        let t: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        // plateau 949.5, target 474.75; the mean ending at sample i is i - 49.5,
        // first reaching the target at i = 525, iteration 526
        assert_eq!(convergence_iteration(&t, 0.5, 100), Some(526));
    }

    #[test]
    fn unreached_level() {
        assert_eq!(iterations_to_level(&[0.1; 50], 0.2, 10), None);
        assert_eq!(convergence_iteration(&[], 0.9, 10), None);
    }

    #[test]
    fn trailing_means_values() {
        assert_eq!(trailing_means(&[1.0, 2.0, 3.0, 4.0], 2), vec![1.5, 2.5, 3.5]);
        assert!(trailing_means(&[1.0], 2).is_empty());
    }
}
