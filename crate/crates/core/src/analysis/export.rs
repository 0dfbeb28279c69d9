use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::trajectory::{Snapshot, Trajectory};
use crate::error::{Error, Result};
use crate::searchspace::{GroupKind, OpKind};

pub const CSV_HEADER: [&str; 5] = ["epoch", "cell", "edge", "op", "weight"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Record {
    epoch: usize,
    cell: GroupKind,
    edge: usize,
    op: OpKind,
    weight: String,
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            offset: 0,
            message: format!("{}: {other:?}", path.display()),
        },
    }
}

/// Long-format CSV, one line per (epoch, group, row, op), weights at six
/// decimals. An empty trajectory gives the header alone.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("in-memory write");
    for s in &traj.snapshots {
        for (g, rows) in s.groups.iter().enumerate() {
            for (e, row) in rows.iter().enumerate() {
                for (o, z) in row.iter().enumerate() {
                    w.serialize(Record {
                        epoch: s.epoch,
                        cell: traj.kinds[g],
                        edge: e,
                        op: traj.opset[o],
                        weight: format!("{z:.6}"),
                    })
                    .expect("in-memory write");
                }
            }
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}

pub fn export_trajectory(traj: &Trajectory, path: &Path) -> Result<()> {
    fs::write(path, trajectory_csv(traj)).map_err(|e| Error::io(path, e))
}

/// Parses CSV written by [`trajectory_csv`] back into snapshots, given the
/// group kinds and op set of the trajectory. Weights come back rounded.
pub fn parse_trajectory_csv(text: &str, kinds: &[GroupKind], opset: &[OpKind]) -> Result<Vec<Snapshot>> {
    let origin = Path::new("<csv>");
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().map_err(|e| csv_err(origin, e))?;
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::Parse {
            offset: 0,
            message: format!("expected header {}", CSV_HEADER.join(",")),
        });
    }
    let mut out: Vec<Snapshot> = Vec::new();
    for (line, rec) in r.deserialize::<Record>().enumerate() {
        let rec = rec.map_err(|e| csv_err(origin, e))?;
        let bad = |m: String| Error::Parse {
            offset: line + 1,
            message: m,
        };
        let g = kinds
            .iter()
            .position(|&k| k == rec.cell)
            .ok_or_else(|| bad(format!("unknown group {}", rec.cell.name())))?;
        let o = opset
            .iter()
            .position(|&k| k == rec.op)
            .ok_or_else(|| bad(format!("op {} outside op set", rec.op)))?;
        let z: f64 = rec.weight.parse().map_err(|_| bad(format!("bad weight '{}'", rec.weight)))?;
        if out.last().is_none_or(|s| s.epoch != rec.epoch) {
            out.push(Snapshot {
                epoch: rec.epoch,
                groups: vec![Vec::new(); kinds.len()],
            });
        }
        let rows = &mut out.last_mut().expect("pushed above").groups[g];
        if rec.edge >= rows.len() {
            rows.resize(rec.edge + 1, vec![f64::NAN; opset.len()]);
        }
        rows[rec.edge][o] = z;
    }
    if out.iter().flat_map(|s| s.values()).any(f64::is_nan) {
        return Err(Error::Parse {
            offset: 0,
            message: "trajectory CSV has missing cells".into(),
        });
    }
    Ok(out)
}

/// One group of a snapshot as a labelled matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl Heatmap {
    pub fn from_snapshot(snapshot: &Snapshot, group: usize, kind: GroupKind, opset: &[OpKind]) -> Result<Self> {
        let values = snapshot
            .groups
            .get(group)
            .ok_or_else(|| Error::Config(format!("snapshot has no group {group}")))?
            .clone();
        Ok(Self {
            rows: (0..values.len()).map(|i| format!("{}:{i}", kind.name())).collect(),
            cols: opset.iter().map(|k| k.name().to_string()).collect(),
            values,
        })
    }
}

pub fn export_heatmap(heatmap: &Heatmap, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(heatmap).expect("heatmap is always serialisable");
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
