//! CSV ingestion for uncertain datasets.
//!
//! Three file layouts are supported:
//!
//! * instance files — `object_id,dim_1,...,dim_d[,weight]`, one row per
//!   instance; rows sharing an `object_id` form one empirical object in
//!   first-appearance order,
//! * gaussian files — `object_id,mean_1,...,mean_d,std_1,...,std_d`, one
//!   row per object,
//! * label files — `object_id,label`; label strings are mapped to dense
//!   integer class ids in dataset object order.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::uncertain::{Instance, ObjectModel, UncertainDataset, UncertainObject};

/// Which of the dataset layouts a file follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetFormat {
    Instances,
    Gaussian,
}

impl std::str::FromStr for DatasetFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "instances" => Ok(DatasetFormat::Instances),
            "gaussian" => Ok(DatasetFormat::Gaussian),
            other => Err(format!(
                "unknown dataset format {other:?}; expected \"instances\" or \"gaussian\""
            )),
        }
    }
}

fn open_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    // Flexible so that ragged rows reach the per-record length check,
    // which names the offending line.
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io {
                path: path.display().to_string(),
                source: io,
            },
            other => Error::Format {
                path: path.display().to_string(),
                message: format!("{other:?}"),
            },
        })
}

fn parse_number(path: &Path, line: u64, field: &str, what: &str) -> Result<f64> {
    let v: f64 = field.parse().map_err(|_| Error::Parse {
        path: path.display().to_string(),
        line,
        message: format!("{what} {field:?} is not a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            path: path.display().to_string(),
            line,
            message: format!("{what} {field:?} is not finite"),
        });
    }
    Ok(v)
}

fn record_line(record: &csv::StringRecord, fallback: u64) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(fallback)
}

/// Loads an uncertain dataset from `path` according to `format`.
pub fn load_dataset(path: &Path, format: DatasetFormat) -> Result<UncertainDataset> {
    match format {
        DatasetFormat::Instances => load_instances(path),
        DatasetFormat::Gaussian => load_gaussian(path),
    }
}

fn load_instances(path: &Path) -> Result<UncertainDataset> {
    let mut reader = open_reader(path)?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Format {
            path: path.display().to_string(),
            message: e.to_string(),
        })?
        .clone();
    if headers.len() < 2 {
        return Err(Error::Format {
            path: path.display().to_string(),
            message: "instance files need object_id plus at least one dimension column".into(),
        });
    }
    if headers.get(0) != Some("object_id") {
        return Err(Error::Format {
            path: path.display().to_string(),
            message: format!(
                "first column must be object_id, found {:?}",
                headers.get(0).unwrap_or("")
            ),
        });
    }
    let has_weight = headers.get(headers.len() - 1) == Some("weight");
    let d = headers.len() - 1 - usize::from(has_weight);
    if d == 0 {
        return Err(Error::Format {
            path: path.display().to_string(),
            message: "no dimension columns between object_id and weight".into(),
        });
    }

    // Grouped rows per object, preserving first-appearance order:
    // instances, per-row weights, and the line the object first appeared on.
    type InstanceGroup = (Vec<Instance>, Vec<Option<f64>>, u64);
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, InstanceGroup> = HashMap::new();

    let mut fallback_line = 1;
    for record in reader.records() {
        fallback_line += 1;
        let record = record.map_err(|e| Error::Format {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let line = record_line(&record, fallback_line);
        if record.len() != headers.len() {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line,
                message: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        let id = record.get(0).unwrap_or("").to_string();
        if id.is_empty() {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line,
                message: "empty object_id".into(),
            });
        }
        let mut coords = Vec::with_capacity(d);
        for j in 0..d {
            coords.push(parse_number(
                path,
                line,
                record.get(1 + j).unwrap_or(""),
                "coordinate",
            )?);
        }
        let weight = if has_weight {
            Some(parse_number(
                path,
                line,
                record.get(1 + d).unwrap_or(""),
                "weight",
            )?)
        } else {
            None
        };

        let entry = groups.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            (Vec::new(), Vec::new(), line)
        });
        entry.0.push(Instance::new(coords).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line,
            message: e.to_string(),
        })?);
        entry.1.push(weight);
    }

    if order.is_empty() {
        return Err(Error::Format {
            path: path.display().to_string(),
            message: "file contains no data rows".into(),
        });
    }

    let mut objects = Vec::with_capacity(order.len());
    for id in order {
        let (instances, weights, first_line) = groups.remove(&id).unwrap();
        let weights = if has_weight {
            let w: Vec<f64> = weights.into_iter().map(|x| x.unwrap()).collect();
            let total: f64 = w.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    line: first_line,
                    message: format!("weights of object {id} sum to {total}, expected 1"),
                });
            }
            Some(w)
        } else {
            None
        };
        objects.push(UncertainObject {
            id,
            model: ObjectModel::Empirical { instances, weights },
        });
    }

    UncertainDataset::new(objects, None)
}

fn load_gaussian(path: &Path) -> Result<UncertainDataset> {
    let mut reader = open_reader(path)?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Format {
            path: path.display().to_string(),
            message: e.to_string(),
        })?
        .clone();
    if headers.get(0) != Some("object_id") {
        return Err(Error::Format {
            path: path.display().to_string(),
            message: format!(
                "first column must be object_id, found {:?}",
                headers.get(0).unwrap_or("")
            ),
        });
    }
    let rest = headers.len() - 1;
    if rest == 0 || rest % 2 != 0 {
        return Err(Error::Format {
            path: path.display().to_string(),
            message: format!(
                "gaussian files need object_id plus matching mean_*/std_* columns, found {rest} value columns"
            ),
        });
    }
    let d = rest / 2;
    for j in 0..d {
        let mean_ok = headers.get(1 + j).is_some_and(|h| h.starts_with("mean"));
        let std_ok = headers.get(1 + d + j).is_some_and(|h| h.starts_with("std"));
        if !mean_ok || !std_ok {
            return Err(Error::Format {
                path: path.display().to_string(),
                message: "expected mean_1..mean_d followed by std_1..std_d columns".into(),
            });
        }
    }

    let mut objects = Vec::new();
    let mut seen: HashMap<String, u64> = HashMap::new();
    let mut fallback_line = 1;
    for record in reader.records() {
        fallback_line += 1;
        let record = record.map_err(|e| Error::Format {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let line = record_line(&record, fallback_line);
        if record.len() != headers.len() {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line,
                message: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        let id = record.get(0).unwrap_or("").to_string();
        if id.is_empty() {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line,
                message: "empty object_id".into(),
            });
        }
        if let Some(prev) = seen.insert(id.clone(), line) {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line,
                message: format!("duplicate object_id {id} (first seen on line {prev})"),
            });
        }
        let mut mean = Vec::with_capacity(d);
        let mut stddev = Vec::with_capacity(d);
        for j in 0..d {
            mean.push(parse_number(
                path,
                line,
                record.get(1 + j).unwrap_or(""),
                "mean",
            )?);
        }
        for j in 0..d {
            let s = parse_number(path, line, record.get(1 + d + j).unwrap_or(""), "stddev")?;
            if s < 0.0 {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    line,
                    message: format!("stddev {s} is negative"),
                });
            }
            stddev.push(s);
        }
        objects.push(UncertainObject {
            id,
            model: ObjectModel::Gaussian {
                mean: Instance::new(mean).map_err(|e| Error::Parse {
                    path: path.display().to_string(),
                    line,
                    message: e.to_string(),
                })?,
                stddev,
            },
        });
    }

    if objects.is_empty() {
        return Err(Error::Format {
            path: path.display().to_string(),
            message: "file contains no data rows".into(),
        });
    }

    UncertainDataset::new(objects, None)
}

/// Reads `object_id,label` pairs and attaches them to `dataset` as dense
/// class ids (assigned in dataset object order). Every object must be
/// labeled exactly once.
pub fn attach_labels(dataset: &mut UncertainDataset, path: &Path) -> Result<()> {
    let mut reader = open_reader(path)?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Format {
            path: path.display().to_string(),
            message: e.to_string(),
        })?
        .clone();
    if headers.len() != 2 || headers.get(0) != Some("object_id") {
        return Err(Error::Format {
            path: path.display().to_string(),
            message: "label files need exactly object_id,label columns".into(),
        });
    }

    let mut by_id: HashMap<String, String> = HashMap::new();
    let mut fallback_line = 1;
    for record in reader.records() {
        fallback_line += 1;
        let record = record.map_err(|e| Error::Format {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let line = record_line(&record, fallback_line);
        if record.len() != 2 {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line,
                message: format!("expected 2 fields, found {}", record.len()),
            });
        }
        let id = record.get(0).unwrap_or("").to_string();
        let label = record.get(1).unwrap_or("").to_string();
        if label.is_empty() {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line,
                message: format!("empty label for object {id}"),
            });
        }
        if by_id.insert(id.clone(), label).is_some() {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line,
                message: format!("duplicate label row for object {id}"),
            });
        }
    }

    let mut dense: HashMap<String, usize> = HashMap::new();
    let mut labels = Vec::with_capacity(dataset.len());
    for obj in dataset.objects() {
        let name = by_id.get(&obj.id).ok_or_else(|| Error::Format {
            path: path.display().to_string(),
            message: format!("object {} has no label row", obj.id),
        })?;
        let next = dense.len();
        labels.push(*dense.entry(name.clone()).or_insert(next));
    }
    dataset.set_labels(labels)
}
