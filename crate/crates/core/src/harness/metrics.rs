//! Per-episode metrics, their CSV representation, and the small analysis
//! helpers (per-env plotted-reward mapping, visit frequency, moving average).

use std::path::Path;

use super::{HarnessError, Result};
use crate::envs::EnvId;

pub const CSV_HEADER: &str =
    "episode,steps,raw_return,sparse_return,plotted_reward,max_state,visit_bitmap,wall_ms";

/// One episode of a run. `max_state` and `visit_bitmap` are recorded for
/// chain runs only.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub episode: usize,
    pub steps: usize,
    pub raw_return: f64,
    pub sparse_return: f64,
    pub plotted_reward: f64,
    pub max_state: Option<usize>,
    pub visit_bitmap: Option<Vec<u8>>,
    pub wall_ms: u64,
}

impl MetricsRow {
    fn to_csv_line(&self) -> String {
        let max_state = self.max_state.map(|s| s.to_string()).unwrap_or_default();
        let bitmap = self
            .visit_bitmap
            .as_ref()
            .map(|b| {
                b.iter()
                    .map(|c| c.to_string())
                    .collect::<Vec<_>>()
                    .join(";")
            })
            .unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{}",
            self.episode,
            self.steps,
            self.raw_return,
            self.sparse_return,
            self.plotted_reward,
            max_state,
            bitmap,
            self.wall_ms
        )
    }
}

pub fn write_metrics_csv(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&row.to_csv_line());
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRow>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    let columns: Vec<&str> = header.split(',').collect();
    for required in CSV_HEADER.split(',') {
        if !columns.contains(&required) {
            return Err(HarnessError::MissingColumn {
                path: path.to_path_buf(),
                column: required.to_string(),
            });
        }
    }
    let index = |name: &str| columns.iter().position(|c| *c == name).unwrap();
    let (i_ep, i_steps, i_raw, i_sparse, i_plot, i_max, i_bitmap, i_wall) = (
        index("episode"),
        index("steps"),
        index("raw_return"),
        index("sparse_return"),
        index("plotted_reward"),
        index("max_state"),
        index("visit_bitmap"),
        index("wall_ms"),
    );
    let mut rows = Vec::new();
    for (r, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let bad = |reason: String| HarnessError::BadMetricsRow {
            path: path.to_path_buf(),
            row: r + 1,
            reason,
        };
        if fields.len() != columns.len() {
            return Err(bad(format!(
                "expected {} fields, found {}",
                columns.len(),
                fields.len()
            )));
        }
        let parse_num = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("bad number {s:?}")));
        let parse_usize = |s: &str| s.parse::<usize>().map_err(|_| bad(format!("bad count {s:?}")));
        rows.push(MetricsRow {
            episode: parse_usize(fields[i_ep])?,
            steps: parse_usize(fields[i_steps])?,
            raw_return: parse_num(fields[i_raw])?,
            sparse_return: parse_num(fields[i_sparse])?,
            plotted_reward: parse_num(fields[i_plot])?,
            max_state: if fields[i_max].is_empty() {
                None
            } else {
                Some(parse_usize(fields[i_max])?)
            },
            visit_bitmap: if fields[i_bitmap].is_empty() {
                None
            } else {
                Some(
                    fields[i_bitmap]
                        .split(';')
                        .map(|b| b.parse::<u8>().map_err(|_| bad(format!("bad bit {b:?}"))))
                        .collect::<Result<_>>()?,
                )
            },
            wall_ms: fields[i_wall]
                .parse()
                .map_err(|_| bad(format!("bad wall_ms {:?}", fields[i_wall])))?,
        });
    }
    Ok(rows)
}

/// The per-environment quantity the reward curves plot: episode length for
/// the balance tasks, goal indicator for the mountain, negative length for
/// the swing-up, raw return for the chain.
pub fn plotted_reward(id: EnvId, steps: usize, goal_reached: bool, raw_return: f64) -> f64 {
    match id {
        EnvId::CartPole | EnvId::PendulumContinuous => steps as f64,
        EnvId::MountainCar => {
            if goal_reached {
                1.0
            } else {
                0.0
            }
        }
        EnvId::Acrobot => -(steps as f64),
        EnvId::Chain(_) => raw_return,
    }
}

/// Elementwise average of the visit bitmaps over the trailing `window`
/// episodes of a chain run.
pub fn visit_frequency(env: EnvId, rows: &[MetricsRow], window: usize) -> Result<Vec<f64>> {
    assert!(window >= 1, "window must be at least 1");
    if !matches!(env, EnvId::Chain(_)) || rows.iter().any(|r| r.visit_bitmap.is_none()) {
        return Err(HarnessError::NoVisitBitmaps(env));
    }
    let tail = &rows[rows.len().saturating_sub(window)..];
    let n = match env {
        EnvId::Chain(n) => n,
        _ => unreachable!(),
    };
    let mut freq = vec![0.0; n];
    for row in tail {
        let bitmap = row.visit_bitmap.as_ref().unwrap();
        for (f, &b) in freq.iter_mut().zip(bitmap) {
            *f += b as f64;
        }
    }
    for f in freq.iter_mut() {
        *f /= tail.len() as f64;
    }
    Ok(freq)
}

/// Trailing mean over `window` entries; the first `window - 1` outputs
/// average over the available prefix.
pub fn moving_average(series: &[f64], window: usize) -> Vec<f64> {
    assert!(window >= 1, "window must be at least 1");
    let mut out = Vec::with_capacity(series.len());
    let mut running = 0.0;
    for (i, &x) in series.iter().enumerate() {
        running += x;
        if i >= window {
            running -= series[i - window];
        }
        out.push(running / window.min(i + 1) as f64);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain_row(episode: usize, bitmap: Vec<u8>) -> MetricsRow {
        MetricsRow {
            episode,
            steps: 19,
            raw_return: 0.0,
            sparse_return: 0.0,
            plotted_reward: 0.0,
            max_state: Some(1 + bitmap.iter().rposition(|&b| b == 1).unwrap_or(0)),
            visit_bitmap: Some(bitmap),
            wall_ms: 1,
        }
    }

    #[test]
    fn plotted_reward_mappings() {
        assert_eq!(plotted_reward(EnvId::CartPole, 137, false, 137.0), 137.0);
        assert_eq!(plotted_reward(EnvId::MountainCar, 88, true, -88.0), 1.0);
        assert_eq!(plotted_reward(EnvId::MountainCar, 200, false, -200.0), 0.0);
        assert_eq!(plotted_reward(EnvId::Acrobot, 200, false, -200.0), -200.0);
        assert_eq!(plotted_reward(EnvId::Chain(10), 19, false, 2.5), 2.5);
    }

    #[test]
    fn visit_frequency_single_episode_is_its_bitmap() {
        let rows = vec![chain_row(1, vec![0, 1, 1, 0, 0])];
        let f = visit_frequency(EnvId::Chain(5), &rows, 10).unwrap();
        assert_eq!(f, vec![0.0, 1.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn visit_frequency_averages_disjoint_halves() {
        let rows = vec![
            chain_row(1, vec![1, 1, 0, 0]),
            chain_row(2, vec![0, 0, 1, 1]),
        ];
        let f = visit_frequency(EnvId::Chain(4), &rows, 2).unwrap();
        assert_eq!(f, vec![0.5, 0.5, 0.5, 0.5]);
    }

    #[test]
    fn visit_frequency_identical_episodes_is_constant() {
        let rows: Vec<MetricsRow> = (1..=5).map(|e| chain_row(e, vec![0, 1, 1])).collect();
        let f = visit_frequency(EnvId::Chain(3), &rows, 3).unwrap();
        assert_eq!(f, vec![0.0, 1.0, 1.0]);
    }

    #[test]
    fn visit_frequency_rejects_non_chain() {
        let rows = vec![MetricsRow {
            episode: 1,
            steps: 10,
            raw_return: 10.0,
            sparse_return: 0.0,
            plotted_reward: 10.0,
            max_state: None,
            visit_bitmap: None,
            wall_ms: 0,
        }];
        assert!(matches!(
            visit_frequency(EnvId::CartPole, &rows, 1),
            Err(HarnessError::NoVisitBitmaps(EnvId::CartPole))
        ));
    }

    #[test]
    fn moving_average_cases() {
        assert_eq!(moving_average(&[3.0; 5], 20), vec![3.0; 5]);
        let mut series = vec![0.0; 19];
        series.push(20.0);
        assert_eq!(*moving_average(&series, 20).last().unwrap(), 1.0);
        let xs = [1.0, 4.0, -2.0];
        assert_eq!(moving_average(&xs, 1), xs.to_vec());
        // prefix averaging before the window fills
        assert_eq!(moving_average(&[2.0, 4.0, 6.0], 2), vec![2.0, 3.0, 5.0]);
    }

    #[test]
    fn csv_round_trip_preserves_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.csv");
        let rows = vec![
            chain_row(1, vec![0, 1, 1, 0]),
            MetricsRow {
                episode: 2,
                steps: 137,
                raw_return: 137.0,
                sparse_return: -1.0,
                plotted_reward: 137.0,
                max_state: None,
                visit_bitmap: None,
                wall_ms: 12,
            },
        ];
        write_metrics_csv(&path, &rows).unwrap();
        assert_eq!(read_metrics_csv(&path).unwrap(), rows);
    }

    #[test]
    fn identical_rows_serialize_to_identical_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
        let rows = vec![chain_row(1, vec![0, 1, 0]), chain_row(2, vec![1, 1, 0])];
        write_metrics_csv(&a, &rows).unwrap();
        write_metrics_csv(&b, &rows).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn missing_column_named_in_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("broken.csv");
        std::fs::write(&path, "episode,steps\n1,2\n").unwrap();
        match read_metrics_csv(&path) {
            Err(HarnessError::MissingColumn { column, .. }) => {
                assert_eq!(column, "raw_return");
            }
            other => panic!("expected missing-column error, got {other:?}"),
        }
    }
}
