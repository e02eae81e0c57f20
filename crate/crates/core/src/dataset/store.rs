use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DatasetError, PlaceSample};
use crate::polar::{read_polar, write_grid, write_polar, GridFile, PolarGridSpec};

pub const MANIFEST: &str = "manifest.csv";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub id: String,
    /// Polar grid file, relative to the manifest.
    pub path: String,
    pub label: String,
    pub floor: usize,
}

/// Writes `polar/<id>.grid` per sample plus the manifest, and the
/// Cartesian maps under `cartesian/` when `with_cartesian` is set.
pub fn write_dataset(
    dir: &Path,
    samples: &[PlaceSample],
    spec: &PolarGridSpec,
    with_cartesian: bool,
) -> Result<(), DatasetError> {
    fs::create_dir_all(dir.join("polar"))?;
    if with_cartesian {
        fs::create_dir_all(dir.join("cartesian"))?;
    }
    let mut manifest = csv::Writer::from_path(dir.join(MANIFEST))?;
    for s in samples {
        let path = format!("polar/{}.grid", s.id);
        let mut out = BufWriter::new(File::create(dir.join(&path))?);
        write_polar(&s.polar, spec, &mut out)?;
        out.flush()?;
        if let (true, Some(c)) = (with_cartesian, &s.cartesian) {
            let mut out = BufWriter::new(File::create(dir.join(format!("cartesian/{}.grid", s.id)))?);
            write_grid(&GridFile::Cartesian(c.clone()), &mut out)?;
            out.flush()?;
        }
        manifest.serialize(ManifestRow { id: s.id.clone(), path, label: s.label.clone(), floor: s.floor })?;
    }
    manifest.flush()?;
    Ok(())
}

/// Loads polar grids listed in the manifest; every grid must have been
/// written for `spec`.
pub fn read_dataset(dir: &Path, spec: &PolarGridSpec) -> Result<Vec<PlaceSample>, DatasetError> {
    let mut reader = csv::Reader::from_path(dir.join(MANIFEST))?;
    let mut samples = Vec::new();
    for row in reader.deserialize() {
        let row: ManifestRow = row?;
        let file = File::open(dir.join(&row.path))
            .map_err(|e| DatasetError::Manifest(format!("{}: {e}", row.path)))?;
        let polar = read_polar(BufReader::new(file), spec)?;
        samples.push(PlaceSample { id: row.id, label: row.label, floor: row.floor, cartesian: None, polar });
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polar::{Cell, PolarGrid};

    #[test]
    fn round_trip() {
        let spec = PolarGridSpec::default();
        let mut polar = PolarGrid::filled(&spec, Cell::Empty);
        polar.set(3, 4, Cell::Occupied);
        polar.set(10, 20, Cell::Unknown);
        let samples = vec![
            PlaceSample { id: "a-1".into(), label: "a".into(), floor: 0, cartesian: None, polar: polar.clone() },
            PlaceSample { id: "b-1".into(), label: "b".into(), floor: 2, cartesian: None, polar },
        ];
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &samples, &spec, false).unwrap();
        let manifest = fs::read_to_string(dir.path().join(MANIFEST)).unwrap();
        assert!(manifest.starts_with("id,path,label,floor\n"));
        assert_eq!(read_dataset(dir.path(), &spec).unwrap(), samples);

        let other = PolarGridSpec::geometric(5.0, 56, 21, 0.05).unwrap();
        assert!(read_dataset(dir.path(), &other).is_err());
    }
}
