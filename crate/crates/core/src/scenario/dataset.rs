use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::generate::{generate_trajectory, surrogate_surface, DatasetSpec};
use super::record::TrajectoryRecord;
use super::spec::WorldSpec;
use super::ScenarioError;
use crate::neural::sha256_hex;
use crate::par::par_map;
use crate::sim::SurfaceModel;

pub const DATASET_FORMAT_VERSION: u32 = 1;

/// First line of a dataset file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub format_version: u32,
    pub spec: DatasetSpec,
    pub count: usize,
    /// Surface shared by every record whose own `surface` entry is null.
    pub shared_surface: Option<SurfaceModel>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub records: Vec<TrajectoryRecord>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn dt(&self) -> f64 {
        self.header.spec.sim.dt
    }

    pub fn refs(&self) -> Vec<&TrajectoryRecord> {
        self.records.iter().collect()
    }

    /// Records `range` as a new dataset with the same header.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        let records = self.records[range].to_vec();
        Self {
            header: DatasetHeader {
                count: records.len(),
                ..self.header.clone()
            },
            records,
        }
    }

    pub fn to_jsonl(&self) -> Result<Vec<u8>, ScenarioError> {
        let mut out = Vec::new();
        self.write_jsonl(&mut out)?;
        Ok(out)
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<(), ScenarioError> {
        let header = DatasetHeader {
            format_version: DATASET_FORMAT_VERSION,
            count: self.records.len(),
            ..self.header.clone()
        };
        serde_json::to_writer(&mut w, &header).map_err(ScenarioError::Json)?;
        w.write_all(b"\n")?;
        for rec in &self.records {
            let mut v = serde_json::to_value(rec).map_err(ScenarioError::Json)?;
            if header.shared_surface.as_ref() == Some(&*rec.surface) {
                v["surface"] = Value::Null;
            }
            serde_json::to_writer(&mut w, &v).map_err(ScenarioError::Json)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: Read>(r: R) -> Result<Self, ScenarioError> {
        let mut lines = BufReader::new(r).lines();
        let first = lines.next().ok_or(ScenarioError::Parse {
            line: 1,
            message: "empty dataset file".into(),
        })??;
        let header: DatasetHeader = serde_json::from_str(&first).map_err(|e| ScenarioError::Parse {
            line: 1,
            message: e.to_string(),
        })?;
        if header.format_version != DATASET_FORMAT_VERSION {
            return Err(ScenarioError::Version {
                found: header.format_version,
                expected: DATASET_FORMAT_VERSION,
            });
        }
        let shared = header.shared_surface.clone().map(Arc::new);
        let mut records = Vec::with_capacity(header.count);
        for (k, line) in lines.enumerate() {
            let line_no = k + 2;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |message: String| ScenarioError::Parse { line: line_no, message };
            let mut v: Value = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
            let uses_shared = v.get("surface").is_some_and(Value::is_null);
            if uses_shared {
                // placeholder replaced below; keeps deserialization of the rest strict
                v["surface"] = serde_json::to_value(SurfaceModel::uniform(0.0)).map_err(ScenarioError::Json)?;
            }
            let mut rec: TrajectoryRecord = serde_json::from_value(v).map_err(|e| parse_err(e.to_string()))?;
            if uses_shared {
                rec.surface = Arc::clone(
                    shared
                        .as_ref()
                        .ok_or_else(|| parse_err("record refers to a shared surface the header lacks".into()))?,
                );
            }
            rec.validate().map_err(parse_err)?;
            records.push(rec);
        }
        if records.len() != header.count {
            return Err(ScenarioError::Parse {
                line: records.len() + 2,
                message: format!("header announces {} records, file holds {}", header.count, records.len()),
            });
        }
        Ok(Self { header, records })
    }

    /// SHA-256 of the serialized dataset.
    pub fn hash(&self) -> Result<String, ScenarioError> {
        Ok(sha256_hex(&self.to_jsonl()?))
    }
}

pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<String, ScenarioError> {
    let bytes = dataset.to_jsonl()?;
    std::fs::write(path, &bytes)?;
    Ok(sha256_hex(&bytes))
}

pub fn load_dataset(path: &Path) -> Result<Dataset, ScenarioError> {
    let file = std::fs::File::open(path)?;
    Dataset::read_jsonl(file)
}

/// Generates `spec.count` trajectories. Each one depends only on the dataset
/// seed and its index.
pub fn generate_dataset(spec: &DatasetSpec) -> Result<Dataset, ScenarioError> {
    generate_dataset_threads(spec, 1)
}

/// [`generate_dataset`] spread over `threads` workers; the result does not
/// depend on the thread count.
pub fn generate_dataset_threads(spec: &DatasetSpec, threads: usize) -> Result<Dataset, ScenarioError> {
    spec.validate().map_err(ScenarioError::Config)?;
    let shared = match &spec.world {
        WorldSpec::SurrogateReal(s) => Some(Arc::new(surrogate_surface(s))),
        WorldSpec::Simulation => None,
    };
    let indices: Vec<usize> = (0..spec.count).collect();
    let records = par_map(&indices, threads, |&i| generate_trajectory(spec, i, shared.as_ref()))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Dataset {
        header: DatasetHeader {
            format_version: DATASET_FORMAT_VERSION,
            spec: spec.clone(),
            count: records.len(),
            shared_surface: shared.map(|s| (*s).clone()),
        },
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{PushSetup, PushSpec, SurrogateRealSpec};

    fn small(world: WorldSpec) -> Dataset {
        let scene = match &world {
            WorldSpec::Simulation => Default::default(),
            WorldSpec::SurrogateReal(_) => SurrogateRealSpec::scene(),
        };
        generate_dataset(&DatasetSpec {
            count: 3,
            seed: 4,
            scene,
            world,
            push: PushSpec {
                setup: PushSetup::PositionControl,
                duration: 0.5,
                ..PushSpec::default()
            },
            ..DatasetSpec::default()
        })
        .unwrap()
    }

    #[test]
    fn jsonl_round_trip_is_exact() {
        for world in [WorldSpec::Simulation, WorldSpec::SurrogateReal(Default::default())] {
            let ds = small(world);
            let bytes = ds.to_jsonl().unwrap();
            let back = Dataset::read_jsonl(bytes.as_slice()).unwrap();
            assert_eq!(back, ds);
            assert_eq!(back.hash().unwrap(), ds.hash().unwrap());
            assert_eq!(bytes.iter().filter(|&&b| b == b'\n').count(), 4);
        }
    }

    #[test]
    fn shared_surface_is_written_once() {
        let ds = small(WorldSpec::SurrogateReal(Default::default()));
        let text = String::from_utf8(ds.to_jsonl().unwrap()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].contains("mu_field"));
        assert!(lines[1..].iter().all(|l| l.contains("\"surface\":null")));
        let back = Dataset::read_jsonl(text.as_bytes()).unwrap();
        assert!(Arc::ptr_eq(&back.records[0].surface, &back.records[2].surface));
    }

    #[test]
    fn errors_name_the_line() {
        let ds = small(WorldSpec::Simulation);
        let text = String::from_utf8(ds.to_jsonl().unwrap()).unwrap();
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        lines[2] = lines[2].replacen("\"frames\"", "\"framez\"", 1);
        let broken = lines.join("\n");
        match Dataset::read_jsonl(broken.as_bytes()) {
            Err(ScenarioError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected a parse error, got {other:?}"),
        }
        let truncated = text.lines().take(3).collect::<Vec<_>>().join("\n");
        assert!(matches!(
            Dataset::read_jsonl(truncated.as_bytes()),
            Err(ScenarioError::Parse { line: 4, .. })
        ));
        let future = text.replacen("\"format_version\":1", "\"format_version\":99", 1);
        assert!(matches!(
            Dataset::read_jsonl(future.as_bytes()),
            Err(ScenarioError::Version { found: 99, .. })
        ));
        assert!(matches!(Dataset::read_jsonl(&b""[..]), Err(ScenarioError::Parse { line: 1, .. })));
    }

    #[test]
    fn thread_count_does_not_change_the_data() {
        let spec = DatasetSpec {
            count: 5,
            push: PushSpec {
                setup: PushSetup::PositionControl,
                duration: 0.3,
                ..PushSpec::default()
            },
            ..DatasetSpec::default()
        };
        assert_eq!(generate_dataset_threads(&spec, 3).unwrap(), generate_dataset(&spec).unwrap());
    }

    #[test]
    fn save_and_load_through_files() {
        let ds = small(WorldSpec::Simulation);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        let hash = save_dataset(&ds, &path).unwrap();
        assert_eq!(hash, ds.hash().unwrap());
        assert_eq!(load_dataset(&path).unwrap(), ds);
        assert_eq!(ds.slice(1..3).records, ds.records[1..3].to_vec());
    }
}
