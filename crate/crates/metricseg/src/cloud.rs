//! Point-cloud container and the versioned `metricseg-pc v1` text format.
//!
//! Format: one header line `metricseg-pc v1 N has_instance has_semantic`,
//! then N lines `x y z r g b [inst] [sem]`. Ids are integers; `-1` encodes
//! an absent id (background points carry no instance).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// One measurement point: position in meters, RGB color in `[0,1]`,
/// optional instance and semantic labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub position: [f64; 3],
    pub color: [f64; 3],
    pub instance_id: Option<u32>,
    pub semantic_id: Option<u32>,
}

/// Ordered list of points.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<Point>,
}

impl PointCloud {
    pub fn new(points: Vec<Point>) -> Self {
        PointCloud { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Checks the container invariants: finite positions, colors in `[0,1]`.
    pub fn validate(&self) -> Result<()> {
        for (i, p) in self.points.iter().enumerate() {
            if !p.position.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinitePoint { index: i });
            }
            if !p.color.iter().all(|c| c.is_finite() && (0.0..=1.0).contains(c)) {
                return Err(Error::ColorOutOfRange { index: i });
            }
        }
        Ok(())
    }

    /// True when any point carries an instance id.
    pub fn has_instance_ids(&self) -> bool {
        self.points.iter().any(|p| p.instance_id.is_some())
    }

    pub fn has_semantic_ids(&self) -> bool {
        self.points.iter().any(|p| p.semantic_id.is_some())
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io_at(path, e))?;
        let mut w = BufWriter::new(file);
        self.emit(&mut w).map_err(|e| match e {
            Error::Io(io) => Error::io_at(path, io),
            other => other,
        })
    }

    /// Writes the v1 format. Floats use Rust's shortest round-trip
    /// representation, so write/parse round-trips are bit-exact.
    pub fn emit<W: Write>(&self, w: &mut W) -> Result<()> {
        let has_inst = self.has_instance_ids();
        let has_sem = self.has_semantic_ids();
        writeln!(
            w,
            "metricseg-pc v1 {} {} {}",
            self.len(),
            has_inst as u8,
            has_sem as u8
        )?;
        for p in &self.points {
            write!(
                w,
                "{} {} {} {} {} {}",
                p.position[0], p.position[1], p.position[2], p.color[0], p.color[1], p.color[2]
            )?;
            if has_inst {
                write!(w, " {}", p.instance_id.map_or(-1, |v| v as i64))?;
            }
            if has_sem {
                write!(w, " {}", p.semantic_id.map_or(-1, |v| v as i64))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_from(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io_at(path, e))?;
        Self::parse(BufReader::new(file), &path.display().to_string())
    }

    pub fn parse<R: BufRead>(reader: R, path: &str) -> Result<Self> {
        let perr = |line: usize, msg: String| Error::Parse {
            path: path.to_string(),
            line,
            msg,
        };
        let mut lines = reader.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| perr(1, "missing header".into()))?;
        let header = header?;
        let head: Vec<&str> = header.split_whitespace().collect();
        if head.len() != 5 || head[0] != "metricseg-pc" {
            return Err(perr(1, format!("bad header `{header}`")));
        }
        if head[1] != "v1" {
            return Err(perr(1, format!("unsupported version `{}`", head[1])));
        }
        let n: usize = head[2]
            .parse()
            .map_err(|_| perr(1, format!("bad point count `{}`", head[2])))?;
        let parse_flag = |s: &str| match s {
            "0" => Ok(false),
            "1" => Ok(true),
            _ => Err(perr(1, format!("bad flag `{s}`"))),
        };
        let has_inst = parse_flag(head[3])?;
        let has_sem = parse_flag(head[4])?;
        let want = 6 + has_inst as usize + has_sem as usize;

        let mut points = Vec::with_capacity(n);
        for (idx, line) in lines {
            let lineno = idx + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() != want {
                return Err(perr(
                    lineno,
                    format!("expected {want} fields, got {}", toks.len()),
                ));
            }
            let mut vals = [0.0f64; 6];
            for (k, v) in vals.iter_mut().enumerate() {
                *v = toks[k]
                    .parse()
                    .map_err(|_| perr(lineno, format!("bad float `{}`", toks[k])))?;
            }
            let mut next = 6;
            let mut parse_id = |present: bool| -> Result<Option<u32>> {
                if !present {
                    return Ok(None);
                }
                let raw: i64 = toks[next]
                    .parse()
                    .map_err(|_| perr(lineno, format!("bad id `{}`", toks[next])))?;
                next += 1;
                match raw {
                    -1 => Ok(None),
                    v if v >= 0 && v <= u32::MAX as i64 => Ok(Some(v as u32)),
                    v => Err(perr(lineno, format!("id {v} out of range"))),
                }
            };
            let instance_id = parse_id(has_inst)?;
            let semantic_id = parse_id(has_sem)?;
            points.push(Point {
                position: [vals[0], vals[1], vals[2]],
                color: [vals[3], vals[4], vals[5]],
                instance_id,
                semantic_id,
            });
        }
        if points.len() != n {
            return Err(perr(
                points.len() + 1,
                format!("header promised {n} points, file has {}", points.len()),
            ));
        }
        let cloud = PointCloud::new(points);
        cloud.validate()?;
        Ok(cloud)
    }
}
