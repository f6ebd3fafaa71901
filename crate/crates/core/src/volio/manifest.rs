use std::collections::HashSet;
use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One row of a dataset manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub subject_id: String,
    pub class_label: usize,
    #[serde(rename = "path")]
    pub volume_path: PathBuf,
}

impl CaseRecord {
    /// Stable identifier for a case: `subject_id` plus the volume's file stem.
    pub fn case_id(&self) -> String {
        let stem = self
            .volume_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        format!("{}/{}", self.subject_id, stem)
    }
}

#[derive(Deserialize)]
struct RawRow {
    subject_id: String,
    class_label: String,
    path: String,
}

/// Loads a `subject_id,class_label,path` CSV. Relative paths resolve against
/// the manifest's directory.
pub fn load_manifest(path: impl AsRef<Path>, class_count: usize) -> Result<Vec<CaseRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);

    let headers = reader
        .headers()
        .map_err(|e| Error::Manifest { line: 1, reason: e.to_string() })?
        .clone();
    if headers.iter().collect::<Vec<_>>() != ["subject_id", "class_label", "path"] {
        return Err(Error::Manifest {
            line: 1,
            reason: format!("expected header subject_id,class_label,path, got {headers:?}"),
        });
    }

    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for (i, row) in reader.deserialize::<RawRow>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::Manifest { line, reason: e.to_string() })?;
        if row.subject_id.is_empty() {
            return Err(Error::Manifest { line, reason: "empty subject_id".into() });
        }
        let class_label: usize = row.class_label.parse().map_err(|_| Error::Manifest {
            line,
            reason: format!("class label {:?} is not a nonnegative integer", row.class_label),
        })?;
        if class_label >= class_count {
            return Err(Error::Manifest {
                line,
                reason: format!("unknown class label {class_label} (class count {class_count})"),
            });
        }
        if row.path.is_empty() {
            return Err(Error::Manifest { line, reason: "empty path".into() });
        }
        let raw = PathBuf::from(&row.path);
        let volume_path = if raw.is_relative() { base.join(raw) } else { raw };
        if !seen.insert((row.subject_id.clone(), volume_path.clone())) {
            return Err(Error::Manifest {
                line,
                reason: format!("duplicate entry ({}, {})", row.subject_id, row.path),
            });
        }
        records.push(CaseRecord { subject_id: row.subject_id, class_label, volume_path });
    }
    Ok(records)
}

/// Writes records, storing paths relative to the manifest directory when possible.
pub fn write_manifest(path: impl AsRef<Path>, records: &[CaseRecord]) -> Result<()> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or(Path::new(""));
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let io_err = |e: csv::Error| Error::io(path, std::io::Error::other(e));
    w.write_record(["subject_id", "class_label", "path"]).map_err(io_err)?;
    for r in records {
        let p = r.volume_path.strip_prefix(base).unwrap_or(&r.volume_path);
        w.write_record([
            r.subject_id.as_str(),
            &r.class_label.to_string(),
            &p.to_string_lossy(),
        ])
        .map_err(io_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn manifest(body: &str) -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        fs::write(&p, body).unwrap();
        (dir, p)
    }

    #[test]
    fn header_only_is_empty() {
        let (_d, p) = manifest("subject_id,class_label,path\n");
        assert!(load_manifest(&p, 5).unwrap().is_empty());
    }

    #[test]
    fn unknown_label_rejected() {
        let (_d, p) = manifest("subject_id,class_label,path\ns1,6,a.vol\n");
        let err = load_manifest(&p, 5).unwrap_err();
        assert!(matches!(err, Error::Manifest { line: 2, .. }), "{err}");
    }

    #[test]
    fn malformed_rows_rejected() {
        let (_d, p) = manifest("subject_id,class_label,path\ns1,x,a.vol\n");
        assert!(load_manifest(&p, 5).is_err());
        let (_d, p) = manifest("subject_id,class_label,path\ns1,1\n");
        assert!(load_manifest(&p, 5).is_err());
        let (_d, p) = manifest("subject_id,class_label,path\n,1,a.vol\n");
        assert!(load_manifest(&p, 5).is_err());
        let (_d, p) = manifest("id,label,file\ns1,1,a.vol\n");
        assert!(load_manifest(&p, 5).is_err());
    }

    #[test]
    fn duplicates_rejected() {
        let (_d, p) = manifest("subject_id,class_label,path\ns1,1,a.vol\ns1,1,a.vol\n");
        assert!(load_manifest(&p, 5).is_err());
        let (_d, p) = manifest("subject_id,class_label,path\ns1,1,a.vol\ns1,1,b.vol\n");
        assert_eq!(load_manifest(&p, 5).unwrap().len(), 2);
    }

    #[test]
    fn relative_paths_resolve_and_round_trip() {
        let (d, p) = manifest("subject_id,class_label,path\ns1,3,vols/a.vol\n");
        let recs = load_manifest(&p, 5).unwrap();
        assert_eq!(recs[0].volume_path, d.path().join("vols/a.vol"));
        let out = d.path().join("out.csv");
        write_manifest(&out, &recs).unwrap();
        assert_eq!(fs::read_to_string(&out).unwrap(), fs::read_to_string(&p).unwrap());
        assert_eq!(load_manifest(&out, 5).unwrap(), recs);
    }
}
