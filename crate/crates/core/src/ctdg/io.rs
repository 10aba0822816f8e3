//! Event CSV reading and writing, plus the JODIE interaction-file loader.
//!
//! The native layout is
//! `t,src,dst,kind,edge_feat_0..,src_feat_0..,dst_feat_0..` with
//! `kind ∈ {node, edge}` and an empty `dst` field on node rows.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use crate::ctdg::event::{EventKind, EventStream};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct IngestOptions {
    /// Stable-sort rows by time instead of rejecting out-of-order input.
    pub sort: bool,
}

struct Row {
    line: usize,
    time: f64,
    kind: EventKind,
    src: String,
    dst: Option<String>,
    edge: Vec<f64>,
    src_feat: Vec<f64>,
    dst_feat: Vec<f64>,
}

fn parse_f64(field: &str, line: usize, what: &str) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|_| Error::Parse {
        line,
        msg: format!("bad {what} `{field}`"),
    })
}

fn parse_features(fields: &[&str], line: usize, allow_empty: bool) -> Result<Vec<f64>> {
    if allow_empty && fields.iter().all(|f| f.trim().is_empty()) {
        return Ok(Vec::new());
    }
    fields.iter().map(|f| parse_f64(f, line, "feature")).collect()
}

/// Reads the native event CSV format from any reader.
pub fn read_events<R: Read>(reader: R, opts: IngestOptions) -> Result<EventStream> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();

    let Some(header) = records.next() else {
        return Ok(EventStream::new(0, 0));
    };
    let header = header?;
    let cols: Vec<&str> = header.iter().map(str::trim).collect();
    if cols.len() < 4 || cols[..4] != ["t", "src", "dst", "kind"] {
        return Err(Error::Parse {
            line: 1,
            msg: "header must start with `t,src,dst,kind`".into(),
        });
    }
    let count = |prefix: &str| cols.iter().filter(|c| c.starts_with(prefix)).count();
    let edge_dim = count("edge_feat_");
    let src_dim = count("src_feat_");
    let dst_dim = count("dst_feat_");
    if src_dim != dst_dim || 4 + edge_dim + src_dim + dst_dim != cols.len() {
        return Err(Error::Parse {
            line: 1,
            msg: "inconsistent feature columns in header".into(),
        });
    }
    let node_dim = src_dim;
    let width = cols.len();

    let mut rows = Vec::new();
    for rec in records {
        let rec = rec?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.len() == 1 && rec[0].trim().is_empty() {
            continue;
        }
        if rec.len() != width {
            return Err(Error::Parse {
                line,
                msg: format!("expected {width} fields, found {}", rec.len()),
            });
        }
        let f: Vec<&str> = rec.iter().collect();
        let kind = match f[3].trim() {
            "edge" => EventKind::EdgeAdd,
            "node" => EventKind::NodeCreate,
            k if k.contains("del") || k.contains("remove") => {
                return Err(Error::UnsupportedKind {
                    line,
                    kind: k.to_owned(),
                })
            }
            k => {
                return Err(Error::Parse {
                    line,
                    msg: format!("unknown event kind `{k}`"),
                })
            }
        };
        let time = parse_f64(f[0], line, "timestamp")?;
        let src = f[1].trim().to_owned();
        if src.is_empty() {
            return Err(Error::Parse {
                line,
                msg: "empty src".into(),
            });
        }
        let dst = match (kind, f[2].trim()) {
            (EventKind::EdgeAdd, "") => {
                return Err(Error::Parse {
                    line,
                    msg: "edge row without dst".into(),
                })
            }
            (EventKind::EdgeAdd, d) => Some(d.to_owned()),
            (EventKind::NodeCreate, "") => None,
            (EventKind::NodeCreate, _) => {
                return Err(Error::Parse {
                    line,
                    msg: "node row must leave dst empty".into(),
                })
            }
        };
        let node_row = kind == EventKind::NodeCreate;
        let e0 = 4;
        let s0 = e0 + edge_dim;
        let d0 = s0 + node_dim;
        rows.push(Row {
            line,
            time,
            kind,
            src,
            dst,
            edge: parse_features(&f[e0..s0], line, node_row)?,
            src_feat: parse_features(&f[s0..d0], line, false)?,
            dst_feat: parse_features(&f[d0..], line, node_row)?,
        });
    }

    if opts.sort {
        rows.sort_by(|a, b| a.time.total_cmp(&b.time));
    }

    let mut stream = EventStream::new(node_dim, edge_dim);
    for row in rows {
        let src = stream.intern(&row.src);
        let dst = row.dst.as_deref().map(|d| stream.intern(d));
        stream
            .push(row.time, row.kind, src, dst, &row.src_feat, &row.dst_feat, &row.edge)
            .map_err(|e| match e {
                Error::Causality(msg) => Error::Parse {
                    line: row.line,
                    msg: format!("{msg} (pass the sort option to reorder)"),
                },
                Error::Contract(msg) | Error::Dimension { detail: msg, .. } => Error::Parse { line: row.line, msg },
                other => other,
            })?;
    }
    Ok(stream)
}

pub fn read_events_file(path: &Path, opts: IngestOptions) -> Result<EventStream> {
    read_events(BufReader::new(File::open(path)?), opts)
}

/// Writes the native CSV layout. Floats use Rust's shortest round-trip
/// formatting, so reading the file back reproduces every value exactly.
pub fn write_events<W: Write>(stream: &EventStream, writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    let mut header: Vec<String> = ["t", "src", "dst", "kind"].iter().map(|s| s.to_string()).collect();
    header.extend((0..stream.edge_dim()).map(|i| format!("edge_feat_{i}")));
    header.extend((0..stream.node_dim()).map(|i| format!("src_feat_{i}")));
    header.extend((0..stream.node_dim()).map(|i| format!("dst_feat_{i}")));
    w.write_record(&header)?;

    let mut rec: Vec<String> = Vec::with_capacity(header.len());
    for e in stream.iter() {
        rec.clear();
        rec.push(format!("{}", e.time));
        rec.push(stream.name(e.src).to_owned());
        match e.kind {
            EventKind::EdgeAdd => {
                rec.push(stream.name(e.dst.expect("edge has dst")).to_owned());
                rec.push("edge".into());
                rec.extend(e.edge_features.iter().map(|v| format!("{v}")));
                rec.extend(e.src_features.iter().map(|v| format!("{v}")));
                rec.extend(e.dst_features.iter().map(|v| format!("{v}")));
            }
            EventKind::NodeCreate => {
                rec.push(String::new());
                rec.push("node".into());
                rec.extend(std::iter::repeat_n(String::new(), stream.edge_dim()));
                rec.extend(e.src_features.iter().map(|v| format!("{v}")));
                rec.extend(std::iter::repeat_n(String::new(), stream.node_dim()));
            }
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_events_file(stream: &EventStream, path: &Path) -> Result<()> {
    let file = File::create(path)?;
    write_events(stream, std::io::BufWriter::new(file))
}

/// Loads a JODIE interaction file
/// (`user_id,item_id,timestamp,state_label,f_0,...`).
///
/// Users keep their ids; item `i` becomes node `num_users + i`, where
/// `num_users` is one more than the largest user id. Node names are the
/// decimal node ids. The state label is ignored.
pub fn read_jodie<R: Read>(reader: R) -> Result<EventStream> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);

    struct Interaction {
        user: u32,
        item: u32,
        time: f64,
        feats: Vec<f64>,
    }
    let mut rows = Vec::new();
    let mut feat_dim: Option<usize> = None;
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.len() < 4 {
            return Err(Error::Parse {
                line,
                msg: format!("expected at least 4 fields, found {}", rec.len()),
            });
        }
        let id = |s: &str, what: &str| -> Result<u32> {
            s.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| *v >= 0.0 && v.fract() == 0.0)
                .map(|v| v as u32)
                .ok_or_else(|| Error::Parse {
                    line,
                    msg: format!("bad {what} `{s}`"),
                })
        };
        let user = id(&rec[0], "user id")?;
        let item = id(&rec[1], "item id")?;
        let time = parse_f64(&rec[2], line, "timestamp")?;
        let feats: Vec<f64> = rec
            .iter()
            .skip(4)
            .map(|f| parse_f64(f, line, "feature"))
            .collect::<Result<_>>()?;
        match feat_dim {
            None => feat_dim = Some(feats.len()),
            Some(d) if d != feats.len() => {
                return Err(Error::Parse {
                    line,
                    msg: format!("expected {d} features, found {}", feats.len()),
                })
            }
            _ => {}
        }
        rows.push(Interaction {
            user,
            item,
            time,
            feats,
        });
    }

    let num_users = rows.iter().map(|r| r.user + 1).max().unwrap_or(0);
    let num_items = rows.iter().map(|r| r.item + 1).max().unwrap_or(0);
    let mut stream = EventStream::new(0, feat_dim.unwrap_or(0));
    for id in 0..num_users + num_items {
        stream.intern(&id.to_string());
    }
    for r in rows {
        let src = crate::ctdg::NodeId(r.user);
        let dst = crate::ctdg::NodeId(num_users + r.item);
        stream.push(r.time, EventKind::EdgeAdd, src, Some(dst), &[], &[], &r.feats)?;
    }
    Ok(stream)
}

pub fn read_jodie_file(path: &Path) -> Result<EventStream> {
    read_jodie(BufReader::new(File::open(path)?))
}
