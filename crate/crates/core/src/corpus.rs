//! KITTI-style corpus directories: `velodyne/NNNNNN.bin`,
//! `label_2/NNNNNN.txt` and `calib/NNNNNN.txt`.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::cloud::PointCloud;
use crate::kitti::{read_calibration, read_labels, read_velodyne_bin, Calibration, KittiError, ObjectLabel};

pub const VELODYNE_DIR: &str = "velodyne";
pub const LABEL_DIR: &str = "label_2";
pub const CALIB_DIR: &str = "calib";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: KittiError },
    #[error("{0}: no frames found")]
    Empty(PathBuf),
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Sorted stems of the files in `dir` with the given extension.
pub fn list_stems(dir: &Path, ext: &str) -> Result<Vec<String>, CorpusError> {
    let mut ids = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        if path.extension().and_then(|e| e.to_str()) == Some(ext) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                ids.push(stem.to_string());
            }
        }
    }
    ids.sort();
    Ok(ids)
}

pub fn read_cloud_file(path: &Path) -> Result<PointCloud, CorpusError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
    read_velodyne_bin(id, &bytes).map_err(|source| CorpusError::Parse {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_label_file(path: &Path) -> Result<Vec<ObjectLabel>, CorpusError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    read_labels(&text).map_err(|source| CorpusError::Parse {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_calib_file(path: &Path) -> Result<Calibration, CorpusError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    read_calibration(&text).map_err(|source| CorpusError::Parse {
        path: path.to_path_buf(),
        source,
    })
}

/// A corpus rooted at a directory. Frames are the `.bin` files under
/// `velodyne/`, in name order.
#[derive(Debug, Clone)]
pub struct Corpus {
    root: PathBuf,
    frame_ids: Vec<String>,
}

impl Corpus {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, CorpusError> {
        let root = root.into();
        let frame_ids = list_stems(&root.join(VELODYNE_DIR), "bin")?;
        Ok(Self { root, frame_ids })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn frame_ids(&self) -> &[String] {
        &self.frame_ids
    }

    pub fn len(&self) -> usize {
        self.frame_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frame_ids.is_empty()
    }

    pub fn cloud_path(&self, id: &str) -> PathBuf {
        self.root.join(VELODYNE_DIR).join(format!("{id}.bin"))
    }

    pub fn label_path(&self, id: &str) -> PathBuf {
        self.root.join(LABEL_DIR).join(format!("{id}.txt"))
    }

    pub fn calib_path(&self, id: &str) -> PathBuf {
        self.root.join(CALIB_DIR).join(format!("{id}.txt"))
    }

    pub fn read_cloud(&self, id: &str) -> Result<PointCloud, CorpusError> {
        read_cloud_file(&self.cloud_path(id))
    }

    pub fn read_labels(&self, id: &str) -> Result<Vec<ObjectLabel>, CorpusError> {
        read_label_file(&self.label_path(id))
    }

    pub fn read_calib(&self, id: &str) -> Result<Calibration, CorpusError> {
        read_calib_file(&self.calib_path(id))
    }

    pub fn read_all_clouds(&self) -> Result<Vec<PointCloud>, CorpusError> {
        self.frame_ids.iter().map(|id| self.read_cloud(id)).collect()
    }
}

/// Writes `bytes` to `path` via a temporary sibling and a rename, creating
/// parent directories as needed.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CorpusError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::Point;
    use crate::kitti::write_velodyne_bin;

    #[test]
    fn lists_frames_in_order() {
        let dir = tempfile::tempdir().unwrap();
        for id in ["000002", "000000", "000001"] {
            let c = PointCloud::new(id, vec![Point::new(1.0, 2.0, 3.0, 0.5)]).unwrap();
            write_atomic(
                &dir.path().join(VELODYNE_DIR).join(format!("{id}.bin")),
                &write_velodyne_bin(&c),
            )
            .unwrap();
        }
        fs::write(dir.path().join(VELODYNE_DIR).join("notes.txt"), "x").unwrap();
        let corpus = Corpus::open(dir.path()).unwrap();
        assert_eq!(corpus.frame_ids(), ["000000", "000001", "000002"]);
        let c = corpus.read_cloud("000001").unwrap();
        assert_eq!(c.frame_id(), "000001");
        assert_eq!(c.len(), 1);
    }

    #[test]
    fn missing_dir_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            Corpus::open(dir.path().join("nope")),
            Err(CorpusError::Io { .. })
        ));
    }
}
