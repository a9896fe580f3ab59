//! CSV exports of an annotation document.

use std::str::FromStr;

use thiserror::Error;

use crate::fingering::FINGER_COUNT;
use crate::session::AnnotationDocument;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    /// Timing, per-finger scores, outcome, label and status.
    Full,
    /// `note_index,label` only.
    Labels,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown export format {0:?} (expected \"full\" or \"labels\")")]
pub struct UnknownFormat(pub String);

impl FromStr for ExportFormat {
    type Err = UnknownFormat;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(ExportFormat::Full),
            "labels" => Ok(ExportFormat::Labels),
            other => Err(UnknownFormat(other.to_string())),
        }
    }
}

pub fn export_annotations(doc: &AnnotationDocument, format: ExportFormat) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    match format {
        ExportFormat::Full => {
            let mut header: Vec<String> = ["note_index", "pitch", "onset_s", "offset_s", "interval_len"]
                .iter()
                .map(|s| s.to_string())
                .collect();
            header.extend((0..FINGER_COUNT).map(|i| format!("s{i}")));
            header.extend(["outcome", "label", "status"].iter().map(|s| s.to_string()));
            w.write_record(&header).expect("in-memory write");
            for r in &doc.notes {
                let a = &r.annotation;
                let mut row = vec![
                    a.note_index.to_string(),
                    r.note.pitch.to_string(),
                    r.note.onset_s.to_string(),
                    r.note.offset_s.to_string(),
                    a.outcome.interval_len.to_string(),
                ];
                row.extend(a.outcome.score.0.iter().map(|s| s.to_string()));
                row.push(a.outcome.kind.name().to_string());
                row.push(a.label.map(|l| l.to_string()).unwrap_or_default());
                row.push(a.status.as_str().to_string());
                w.write_record(&row).expect("in-memory write");
            }
        }
        ExportFormat::Labels => {
            w.write_record(["note_index", "label"]).expect("in-memory write");
            for r in &doc.notes {
                let a = &r.annotation;
                let label = a.label.map(|l| l.to_string()).unwrap_or_default();
                w.write_record([a.note_index.to_string(), label]).expect("in-memory write");
            }
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("CSV is UTF-8")
}
