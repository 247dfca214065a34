//! Trace CSV and summary JSON.

use std::io::Write;
use std::path::Path;

use super::metrics::ScenarioSummary;
use super::runner::StepRecord;
use crate::Result;

pub const TRACE_COLUMNS: [&str; 11] = [
    "t",
    "x_gt",
    "action",
    "x_star",
    "posterior_std",
    "ess",
    "resampled",
    "r_star",
    "hr_bpm",
    "hr_confidence",
    "wall_time_s",
];

/// Writes the trace with one `score_<k>` column per action. Missing values
/// are empty fields. Latency is written only when `with_timing` is set, so
/// that repeated runs give identical bytes.
pub fn write_trace<W: Write>(out: W, trace: &[StepRecord], n_actions: usize, with_timing: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let header: Vec<String> = TRACE_COLUMNS
        .iter()
        .map(|s| s.to_string())
        .chain((0..n_actions).map(|k| format!("score_{k}")))
        .collect();
    w.write_record(&header)?;
    for r in trace {
        let mut row = vec![
            r.t.to_string(),
            r.x_gt.to_string(),
            r.action.to_string(),
            r.x_star.to_string(),
            r.posterior_std.to_string(),
            r.ess.to_string(),
            u8::from(r.resampled).to_string(),
            r.r_star.to_string(),
            r.hr_bpm.map(|v| v.to_string()).unwrap_or_default(),
            r.hr_confidence.to_string(),
            if with_timing {
                r.wall_time_s.to_string()
            } else {
                String::new()
            },
        ];
        for k in 0..n_actions {
            row.push(
                r.action_scores
                    .as_ref()
                    .and_then(|s| s.get(k))
                    .map(|v| v.to_string())
                    .unwrap_or_default(),
            );
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trace_file(path: &Path, trace: &[StepRecord], n_actions: usize, with_timing: bool) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_trace(std::io::BufWriter::new(file), trace, n_actions, with_timing)
}

pub fn write_summary_file(path: &Path, summary: &ScenarioSummary) -> Result<()> {
    let mut text = serde_json::to_string_pretty(summary)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(t: usize, hr: Option<f64>, scores: Option<Vec<f64>>) -> StepRecord {
        StepRecord {
            t,
            x_gt: 0.5,
            action: -0.1,
            x_star: 0.25,
            posterior_std: 0.01,
            ess: 812.5,
            resampled: true,
            r_star: 31,
            hr_bpm: hr,
            hr_confidence: 0.75,
            action_scores: scores,
            wall_time_s: 0.125,
            reinitialized: false,
            profile_scale: 1.0,
        }
    }

    #[test]
    fn header_and_absent_fields() {
        let trace = vec![rec(0, Some(140.0), Some(vec![-1.5, -2.0])), rec(1, None, None)];
        let mut buf = Vec::new();
        write_trace(&mut buf, &trace, 2, false).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines[0],
            "t,x_gt,action,x_star,posterior_std,ess,resampled,r_star,hr_bpm,hr_confidence,wall_time_s,score_0,score_1"
        );
        assert_eq!(lines[1], "0,0.5,-0.1,0.25,0.01,812.5,1,31,140,0.75,,-1.5,-2");
        assert_eq!(lines[2], "1,0.5,-0.1,0.25,0.01,812.5,1,31,,0.75,,,");
    }

    #[test]
    fn timing_column_is_optional() {
        let mut buf = Vec::new();
        write_trace(&mut buf, &[rec(0, None, None)], 0, true).unwrap();
        assert!(String::from_utf8(buf).unwrap().lines().nth(1).unwrap().ends_with(",0.125"));
    }
}
