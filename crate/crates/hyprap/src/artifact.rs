//! Versioned binary artifact files for libraries, calibration sets, and
//! epsilon tables: a fixed magic/version/kind header followed by flat
//! little-endian arrays. The `calibrate` command writes them; `run`, `batch`,
//! and `sweep` read them back.

use crate::conformal::{BudgetMode, EpsilonTable};
use crate::geometry::Vec2;
use crate::predictors::{CalibrationExample, CalibrationSet, LibrarySegment, TrajectoryLibrary};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use thiserror::Error;

const MAGIC: [u8; 4] = *b"HYPA";
const VERSION: u16 = 1;

const KIND_LIBRARY: u8 = 1;
const KIND_CALIBRATION: u8 = 2;
const KIND_EPSILON: u8 = 3;

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path} is not an artifact file (bad magic)")]
    BadMagic { path: String },
    #[error("{path}: unsupported artifact version {version}")]
    BadVersion { path: String, version: u16 },
    #[error("{path}: expected kind {expected}, found {found}")]
    WrongKind {
        path: String,
        expected: u8,
        found: u8,
    },
    #[error("{path}: malformed payload ({reason})")]
    Malformed { path: String, reason: String },
}

struct Writer<W: Write> {
    inner: W,
}

impl<W: Write> Writer<W> {
    fn u8(&mut self, v: u8) -> std::io::Result<()> {
        self.inner.write_all(&[v])
    }
    fn u16(&mut self, v: u16) -> std::io::Result<()> {
        self.inner.write_all(&v.to_le_bytes())
    }
    fn u64(&mut self, v: u64) -> std::io::Result<()> {
        self.inner.write_all(&v.to_le_bytes())
    }
    fn f64(&mut self, v: f64) -> std::io::Result<()> {
        self.inner.write_all(&v.to_le_bytes())
    }
    fn points(&mut self, points: &[Vec2]) -> std::io::Result<()> {
        for p in points {
            self.f64(p.x)?;
            self.f64(p.y)?;
        }
        Ok(())
    }
}

struct Reader<R: Read> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn u8(&mut self) -> std::io::Result<u8> {
        let mut b = [0u8; 1];
        self.inner.read_exact(&mut b)?;
        Ok(b[0])
    }
    fn u16(&mut self) -> std::io::Result<u16> {
        let mut b = [0u8; 2];
        self.inner.read_exact(&mut b)?;
        Ok(u16::from_le_bytes(b))
    }
    fn u64(&mut self) -> std::io::Result<u64> {
        let mut b = [0u8; 8];
        self.inner.read_exact(&mut b)?;
        Ok(u64::from_le_bytes(b))
    }
    fn f64(&mut self) -> std::io::Result<f64> {
        let mut b = [0u8; 8];
        self.inner.read_exact(&mut b)?;
        Ok(f64::from_le_bytes(b))
    }
    fn points(&mut self, n: usize) -> std::io::Result<Vec<Vec2>> {
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let x = self.f64()?;
            let y = self.f64()?;
            out.push(Vec2::new(x, y));
        }
        Ok(out)
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> ArtifactError + '_ {
    move |source| ArtifactError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn open_kind(path: &Path, kind: u8) -> Result<Reader<BufReader<File>>, ArtifactError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut reader = Reader {
        inner: BufReader::new(file),
    };
    let mut magic = [0u8; 4];
    reader.inner.read_exact(&mut magic).map_err(io_err(path))?;
    if magic != MAGIC {
        return Err(ArtifactError::BadMagic {
            path: path.display().to_string(),
        });
    }
    let version = reader.u16().map_err(io_err(path))?;
    if version != VERSION {
        return Err(ArtifactError::BadVersion {
            path: path.display().to_string(),
            version,
        });
    }
    let found = reader.u8().map_err(io_err(path))?;
    if found != kind {
        return Err(ArtifactError::WrongKind {
            path: path.display().to_string(),
            expected: kind,
            found,
        });
    }
    Ok(reader)
}

fn create_kind(path: &Path, kind: u8) -> Result<Writer<BufWriter<File>>, ArtifactError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut writer = Writer {
        inner: BufWriter::new(file),
    };
    writer.inner.write_all(&MAGIC).map_err(io_err(path))?;
    writer.u16(VERSION).map_err(io_err(path))?;
    writer.u8(kind).map_err(io_err(path))?;
    Ok(writer)
}

pub fn save_library(library: &TrajectoryLibrary, seed: u64, path: &Path) -> Result<(), ArtifactError> {
    let mut w = create_kind(path, KIND_LIBRARY)?;
    let e = io_err(path);
    w.u64(library.window as u64).map_err(&e)?;
    w.u64(library.horizon as u64).map_err(&e)?;
    w.u64(library.len() as u64).map_err(&e)?;
    w.u64(seed).map_err(&e)?;
    for seg in &library.segments {
        w.points(&seg.history).map_err(&e)?;
        w.points(&seg.future).map_err(&e)?;
    }
    w.inner.flush().map_err(&e)
}

pub fn load_library(path: &Path) -> Result<(TrajectoryLibrary, u64), ArtifactError> {
    let mut r = open_kind(path, KIND_LIBRARY)?;
    let e = io_err(path);
    let window = r.u64().map_err(&e)? as usize;
    let horizon = r.u64().map_err(&e)? as usize;
    let n = r.u64().map_err(&e)? as usize;
    let seed = r.u64().map_err(&e)?;
    if window == 0 || horizon == 0 {
        return Err(ArtifactError::Malformed {
            path: path.display().to_string(),
            reason: "zero window or horizon".into(),
        });
    }
    let mut segments = Vec::with_capacity(n);
    for _ in 0..n {
        let history = r.points(window).map_err(&e)?;
        let future = r.points(horizon).map_err(&e)?;
        segments.push(LibrarySegment { history, future });
    }
    Ok((
        TrajectoryLibrary {
            window,
            horizon,
            segments,
        },
        seed,
    ))
}

pub fn save_calibration(set: &CalibrationSet, path: &Path) -> Result<(), ArtifactError> {
    let mut w = create_kind(path, KIND_CALIBRATION)?;
    let e = io_err(path);
    w.u64(set.horizon as u64).map_err(&e)?;
    w.u64(set.seed).map_err(&e)?;
    w.u64(set.accurate.len() as u64).map_err(&e)?;
    w.u64(set.fast.len() as u64).map_err(&e)?;
    for examples in [&set.accurate, &set.fast] {
        for ex in examples {
            w.points(&ex.predicted).map_err(&e)?;
            w.points(&ex.truth).map_err(&e)?;
        }
    }
    w.inner.flush().map_err(&e)
}

pub fn load_calibration(path: &Path) -> Result<CalibrationSet, ArtifactError> {
    let mut r = open_kind(path, KIND_CALIBRATION)?;
    let e = io_err(path);
    let horizon = r.u64().map_err(&e)? as usize;
    let seed = r.u64().map_err(&e)?;
    let n_accurate = r.u64().map_err(&e)? as usize;
    let n_fast = r.u64().map_err(&e)? as usize;
    let mut read_examples = |n: usize| -> std::io::Result<Vec<CalibrationExample>> {
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let predicted = r.points(horizon)?;
            let truth = r.points(horizon)?;
            out.push(CalibrationExample { predicted, truth });
        }
        Ok(out)
    };
    let accurate = read_examples(n_accurate).map_err(&e)?;
    let fast = read_examples(n_fast).map_err(&e)?;
    Ok(CalibrationSet {
        horizon,
        seed,
        accurate,
        fast,
    })
}

pub fn save_epsilon_table(table: &EpsilonTable, path: &Path) -> Result<(), ArtifactError> {
    let mut w = create_kind(path, KIND_EPSILON)?;
    let e = io_err(path);
    w.f64(table.delta).map_err(&e)?;
    w.u64(table.horizon as u64).map_err(&e)?;
    w.u64(table.m_max as u64).map_err(&e)?;
    w.u64(table.n_calibration as u64).map_err(&e)?;
    w.u64(table.seed).map_err(&e)?;
    w.u8(match table.budget_mode {
        BudgetMode::MAdaptive => 0,
        BudgetMode::FixedN => 1,
    })
    .map_err(&e)?;
    for level in [
        crate::predictors::PredictorLevel::Accurate,
        crate::predictors::PredictorLevel::Fast,
    ] {
        for v in table.cells(level) {
            w.f64(*v).map_err(&e)?;
        }
    }
    w.inner.flush().map_err(&e)
}

pub fn load_epsilon_table(path: &Path) -> Result<EpsilonTable, ArtifactError> {
    let mut r = open_kind(path, KIND_EPSILON)?;
    let e = io_err(path);
    let delta = r.f64().map_err(&e)?;
    let horizon = r.u64().map_err(&e)? as usize;
    let m_max = r.u64().map_err(&e)? as usize;
    let n_calibration = r.u64().map_err(&e)? as usize;
    let seed = r.u64().map_err(&e)?;
    let budget_mode = match r.u8().map_err(&e)? {
        0 => BudgetMode::MAdaptive,
        1 => BudgetMode::FixedN,
        other => {
            return Err(ArtifactError::Malformed {
                path: path.display().to_string(),
                reason: format!("unknown budget mode {other}"),
            })
        }
    };
    if horizon == 0 || m_max == 0 {
        return Err(ArtifactError::Malformed {
            path: path.display().to_string(),
            reason: "zero horizon or m_max".into(),
        });
    }
    let cells = m_max * horizon;
    let mut read_cells = |n: usize| -> std::io::Result<Vec<f64>> {
        (0..n).map(|_| r.f64()).collect()
    };
    let accurate = read_cells(cells).map_err(&e)?;
    let fast = read_cells(cells).map_err(&e)?;
    Ok(EpsilonTable::from_cells(
        delta,
        horizon,
        m_max,
        n_calibration,
        seed,
        budget_mode,
        accurate,
        fast,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictors::{build_library, PredictorLevel};

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("hyprap-artifact-tests");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn library_roundtrip() {
        let rollout: Vec<Vec2> = (0..=30).map(|i| Vec2::new(i as f64 * 0.1, 0.3)).collect();
        let (lib, _) = build_library(&[rollout], 4, 6, 2);
        let path = tmp("lib.bin");
        save_library(&lib, 77, &path).unwrap();
        let (back, seed) = load_library(&path).unwrap();
        assert_eq!(back, lib);
        assert_eq!(seed, 77);
    }

    #[test]
    fn calibration_roundtrip() {
        let mk = |n: usize| {
            (0..n)
                .map(|i| CalibrationExample {
                    predicted: vec![Vec2::new(i as f64, 0.0); 5],
                    truth: vec![Vec2::new(i as f64, 0.1); 5],
                })
                .collect()
        };
        let set = CalibrationSet {
            horizon: 5,
            seed: 9,
            accurate: mk(3),
            fast: mk(4),
        };
        let path = tmp("cal.bin");
        save_calibration(&set, &path).unwrap();
        let back = load_calibration(&path).unwrap();
        assert_eq!(back, set);
    }

    #[test]
    fn epsilon_roundtrip() {
        let table = EpsilonTable::from_cells(
            0.05,
            3,
            2,
            100,
            5,
            BudgetMode::MAdaptive,
            vec![0.1; 6],
            vec![0.2; 6],
        );
        let path = tmp("eps.bin");
        save_epsilon_table(&table, &path).unwrap();
        let back = load_epsilon_table(&path).unwrap();
        assert_eq!(back, table);
        assert_eq!(back.lookup(PredictorLevel::Fast, 2, 3).unwrap().epsilon, 0.2);
    }

    #[test]
    fn wrong_kind_is_rejected() {
        let table = EpsilonTable::from_cells(
            0.05,
            1,
            1,
            10,
            5,
            BudgetMode::FixedN,
            vec![0.1],
            vec![0.2],
        );
        let path = tmp("kind.bin");
        save_epsilon_table(&table, &path).unwrap();
        assert!(matches!(
            load_library(&path),
            Err(ArtifactError::WrongKind { .. })
        ));
    }

    #[test]
    fn garbage_is_rejected() {
        let path = tmp("garbage.bin");
        std::fs::write(&path, b"not an artifact").unwrap();
        assert!(matches!(
            load_calibration(&path),
            Err(ArtifactError::BadMagic { .. })
        ));
    }
}
