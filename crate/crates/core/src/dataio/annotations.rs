//! The canonical annotation CSV: `frame_index,x1,y1,x2,y2,class_id`, one row
//! per object, header required, pixel units.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geometry::{BBox, GroundTruth, VideoMeta};
use crate::{Error, Result};

pub const HEADER: [&str; 6] = ["frame_index", "x1", "y1", "x2", "y2", "class_id"];

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    frame_index: usize,
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
    class_id: usize,
}

/// Per-frame ground truth for one video plus what loading had to fix up.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Annotations {
    pub frames: Vec<Vec<GroundTruth>>,
    pub duplicates_removed: usize,
    pub clamped: usize,
    pub dropped_outside: usize,
}

impl Annotations {
    pub fn empty(frame_count: usize) -> Self {
        Self { frames: vec![Vec::new(); frame_count], ..Default::default() }
    }

    pub fn annotated_frames(&self) -> impl Iterator<Item = usize> + '_ {
        self.frames.iter().enumerate().filter(|(_, g)| !g.is_empty()).map(|(i, _)| i)
    }

    pub fn num_boxes(&self) -> usize {
        self.frames.iter().map(Vec::len).sum()
    }
}

pub fn load_annotations(path: &Path, meta: &VideoMeta) -> Result<Annotations> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(format!("open {}", path.display()), e))?;
    parse_annotations(file, path, meta)
}

pub(crate) fn parse_annotations(reader: impl std::io::Read, path: &Path, meta: &VideoMeta) -> Result<Annotations> {
    let parse_err = |line: usize, message: String| Error::Parse { path: path.to_path_buf(), line, message };
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);

    let mut out = Annotations::empty(meta.frame_count);
    let headers = match rdr.headers() {
        Ok(h) => h.clone(),
        Err(e) => return Err(parse_err(1, e.to_string())),
    };
    if headers.is_empty() {
        return Ok(out);
    }
    if headers.iter().ne(HEADER.iter().copied()) {
        return Err(parse_err(1, format!("expected header {}", HEADER.join(","))));
    }

    let mut seen = HashSet::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let row: Row = record.deserialize(Some(&headers)).map_err(|e| parse_err(line, e.to_string()))?;
        if row.frame_index >= meta.frame_count {
            return Err(parse_err(line, format!("frame {} beyond video length {}", row.frame_index, meta.frame_count)));
        }
        let bbox =
            BBox::new(row.x1, row.y1, row.x2, row.y2, row.frame_index).map_err(|e| parse_err(line, e.to_string()))?;
        let key = (row.frame_index, [row.x1, row.y1, row.x2, row.y2].map(f64::to_bits));
        if !seen.insert(key) {
            out.duplicates_removed += 1;
            continue;
        }
        let clamped = match bbox.clamp_to_frame(meta.width, meta.height) {
            Ok(c) => c,
            Err(e) => {
                log::warn!("{}:{line}: {e}; dropped", path.display());
                out.dropped_outside += 1;
                continue;
            }
        };
        if clamped != bbox {
            log::warn!("{}:{line}: box clamped to frame", path.display());
            out.clamped += 1;
        }
        out.frames[row.frame_index].push(GroundTruth { bbox: clamped, class_id: row.class_id });
    }
    if out.duplicates_removed > 0 {
        log::info!("{}: removed {} duplicate rows", path.display(), out.duplicates_removed);
    }
    Ok(out)
}

pub fn write_annotations(path: &Path, frames: &[Vec<GroundTruth>]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let io = |e: csv::Error| Error::Config(format!("{}: {e}", path.display()));
    w.write_record(HEADER).map_err(io)?;
    for gts in frames {
        for g in gts {
            let b = g.bbox;
            w.serialize(Row {
                frame_index: b.frame_index,
                x1: b.x1,
                y1: b.y1,
                x2: b.x2,
                y2: b.y2,
                class_id: g.class_id,
            })
            .map_err(io)?;
        }
    }
    w.flush().map_err(|e| Error::io(format!("flush {}", path.display()), e))
}
