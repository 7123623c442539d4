//! File formats: model and parameter JSON, bounding-ellipsoid JSON, and
//! trajectory CSV.
//!
//! Schemas are documented in `docs/model-format.md` and
//! `docs/data-format.md`. All units are SI, angles in radians; every format
//! carries a `format` version field.

use std::path::Path;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use inertia_core::consistency::Ellipsoid;
use inertia_core::model::{Body, BodyKind, KinematicModel, ParamVector, DEFAULT_GRAVITY};
use inertia_core::pipeline::RawLog;
use inertia_core::spatial::{RigidTransform, SymMat3};

use crate::CliError;

/// Current model-format version.
pub const MODEL_FORMAT: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MountJson {
    translation: [f64; 3],
    #[serde(skip_serializing_if = "Option::is_none")]
    rotation: Option<[[f64; 3]; 3]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BodyJson {
    name: String,
    kind: String,
    /// 0 means the world; k means the k-th body of this file (1-based).
    parent: usize,
    mount: MountJson,
    axis: [f64; 3],
    #[serde(skip_serializing_if = "Option::is_none")]
    joint: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gear_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    driven_joint: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelJson {
    format: u32,
    name: String,
    gravity: Option<[f64; 3]>,
    bodies: Vec<BodyJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    friction_joints: Option<Vec<bool>>,
}

fn matrix3(rows: &[[f64; 3]; 3]) -> Matrix3<f64> {
    Matrix3::from_fn(|i, j| rows[i][j])
}

fn rows3(m: &Matrix3<f64>) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = m[(i, j)];
        }
    }
    out
}

/// Load and validate a kinematic model from JSON. Every violation found is
/// listed, not just the first.
pub fn load_model(path: &Path) -> Result<KinematicModel, CliError> {
    let text = read_file(path)?;
    let json: ModelJson = serde_json::from_str(&text)
        .map_err(|e| CliError::Data(format!("{}: model parse error: {e}", path.display())))?;
    if json.format != MODEL_FORMAT {
        return Err(CliError::Data(format!(
            "{}: unsupported model format {} (expected {MODEL_FORMAT})",
            path.display(),
            json.format
        )));
    }
    let mut violations = Vec::new();
    let mut bodies = Vec::with_capacity(json.bodies.len());
    for (i, b) in json.bodies.iter().enumerate() {
        let rotation = match &b.mount.rotation {
            Some(r) => matrix3(r),
            None => Matrix3::identity(),
        };
        let mount = match RigidTransform::new(rotation, Vector3::from(b.mount.translation)) {
            Ok(t) => t,
            Err(e) => {
                violations.push(format!("body {i} ({}): mount {e}", b.name));
                RigidTransform::identity()
            }
        };
        let kind = match b.kind.as_str() {
            "link" => match b.joint {
                Some(joint) => BodyKind::Link { joint },
                None => {
                    violations.push(format!("body {i} ({}): link needs a `joint` index", b.name));
                    BodyKind::Link { joint: 0 }
                }
            },
            "rotor" => match (b.gear_ratio, b.driven_joint) {
                (Some(gear_ratio), Some(driven_joint)) => BodyKind::Rotor {
                    gear_ratio,
                    driven_joint,
                },
                _ => {
                    violations.push(format!(
                        "body {i} ({}): rotor needs `gear_ratio` and `driven_joint`",
                        b.name
                    ));
                    BodyKind::Rotor {
                        gear_ratio: 1.0,
                        driven_joint: 0,
                    }
                }
            },
            other => {
                violations.push(format!(
                    "body {i} ({}): unknown kind `{other}` (expected link|rotor)",
                    b.name
                ));
                BodyKind::Link { joint: 0 }
            }
        };
        let parent = if b.parent == 0 {
            None
        } else {
            Some(b.parent - 1)
        };
        bodies.push(Body {
            name: b.name.clone(),
            parent,
            mount,
            axis: Vector3::from(b.axis),
            kind,
        });
    }
    let gravity = json.gravity.map(Vector3::from).unwrap_or(DEFAULT_GRAVITY);
    match KinematicModel::new(bodies, gravity, json.friction_joints) {
        Ok(model) if violations.is_empty() => Ok(model),
        Ok(_) | Err(_) => {
            if let Err(errors) = KinematicModel::new(
                json.bodies
                    .iter()
                    .enumerate()
                    .map(|(i, b)| Body {
                        name: b.name.clone(),
                        parent: if b.parent == 0 { None } else { Some(b.parent - 1) },
                        mount: RigidTransform::identity(),
                        axis: Vector3::from(b.axis),
                        kind: match b.kind.as_str() {
                            "rotor" => BodyKind::Rotor {
                                gear_ratio: b.gear_ratio.unwrap_or(1.0),
                                driven_joint: b.driven_joint.unwrap_or(0),
                            },
                            _ => BodyKind::Link {
                                joint: b.joint.unwrap_or(i),
                            },
                        },
                    })
                    .collect(),
                gravity,
                None,
            ) {
                for e in errors {
                    violations.push(e.to_string());
                }
            }
            violations.sort();
            violations.dedup();
            Err(CliError::Data(format!(
                "{}: invalid model:\n  - {}",
                path.display(),
                violations.join("\n  - ")
            )))
        }
    }
}

/// Serialize a model back to its canonical JSON form.
pub fn model_to_json(model: &KinematicModel, name: &str) -> String {
    let bodies = model
        .bodies()
        .iter()
        .map(|b| {
            let rotation = b.mount.rotation;
            let is_identity = (rotation - Matrix3::identity()).abs().max() == 0.0;
            BodyJson {
                name: b.name.clone(),
                kind: if b.is_rotor() { "rotor" } else { "link" }.into(),
                parent: b.parent.map(|p| p + 1).unwrap_or(0),
                mount: MountJson {
                    translation: b.mount.translation.into(),
                    rotation: (!is_identity).then(|| rows3(&rotation)),
                },
                axis: b.axis.into(),
                joint: match b.kind {
                    BodyKind::Link { joint } => Some(joint),
                    BodyKind::Rotor { .. } => None,
                },
                gear_ratio: match b.kind {
                    BodyKind::Rotor { gear_ratio, .. } => Some(gear_ratio),
                    _ => None,
                },
                driven_joint: match b.kind {
                    BodyKind::Rotor { driven_joint, .. } => Some(driven_joint),
                    _ => None,
                },
            }
        })
        .collect();
    let json = ModelJson {
        format: MODEL_FORMAT,
        name: name.into(),
        gravity: Some(model.gravity().into()),
        bodies,
        friction_joints: Some(model.friction_joints().to_vec()),
    };
    serde_json::to_string_pretty(&json).expect("model serialization cannot fail")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ParamsJson {
    format: u32,
    #[serde(flatten)]
    params: ParamVector,
}

/// Load a parameter file (per-body 10-vectors plus friction).
pub fn load_params(path: &Path) -> Result<ParamVector, CliError> {
    let text = read_file(path)?;
    let json: ParamsJson = serde_json::from_str(&text)
        .map_err(|e| CliError::Data(format!("{}: parameter parse error: {e}", path.display())))?;
    if json.format != MODEL_FORMAT {
        return Err(CliError::Data(format!(
            "{}: unsupported parameter format {}",
            path.display(),
            json.format
        )));
    }
    Ok(json.params)
}

/// Serialize parameters to canonical JSON.
pub fn params_to_json(params: &ParamVector) -> String {
    serde_json::to_string_pretty(&ParamsJson {
        format: MODEL_FORMAT,
        params: params.clone(),
    })
    .expect("parameter serialization cannot fail")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EllipsoidJson {
    body: usize,
    center: [f64; 3],
    #[serde(skip_serializing_if = "Option::is_none")]
    shape: Option<[[f64; 3]; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    semi_axes: Option<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rotation: Option<[[f64; 3]; 3]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EllipsoidsJson {
    format: u32,
    ellipsoids: Vec<EllipsoidJson>,
}

/// Per-body bounding ellipsoids; a body may carry several (unions are used
/// by the consistency checks).
pub fn load_ellipsoids(path: &Path, n_bodies: usize) -> Result<Vec<Vec<Ellipsoid>>, CliError> {
    let text = read_file(path)?;
    let json: EllipsoidsJson = serde_json::from_str(&text)
        .map_err(|e| CliError::Data(format!("{}: ellipsoid parse error: {e}", path.display())))?;
    if json.format != MODEL_FORMAT {
        return Err(CliError::Data(format!(
            "{}: unsupported ellipsoid format {}",
            path.display(),
            json.format
        )));
    }
    let mut out = vec![Vec::new(); n_bodies];
    for (k, e) in json.ellipsoids.iter().enumerate() {
        if e.body >= n_bodies {
            return Err(CliError::Data(format!(
                "{}: ellipsoid {k} references body {} but the model has {n_bodies} bodies",
                path.display(),
                e.body
            )));
        }
        let center = Vector3::from(e.center);
        let ellipsoid = match (&e.shape, &e.semi_axes) {
            (Some(shape), None) => {
                Ellipsoid::new(center, SymMat3::from_matrix(&matrix3(shape)))
            }
            (None, Some(axes)) => {
                let rotation = e.rotation.as_ref().map(matrix3).unwrap_or_else(Matrix3::identity);
                Ellipsoid::from_semi_axes(center, Vector3::from(*axes), rotation)
            }
            _ => {
                return Err(CliError::Data(format!(
                    "{}: ellipsoid {k} needs exactly one of `shape` or `semi_axes`",
                    path.display()
                )))
            }
        }
        .map_err(|err| CliError::Data(format!("{}: ellipsoid {k}: {err}", path.display())))?;
        out[e.body].push(ellipsoid);
    }
    Ok(out)
}

/// One ellipsoid per body, as identification requires.
pub fn single_ellipsoid_per_body(
    per_body: Vec<Vec<Ellipsoid>>,
) -> Result<Vec<Ellipsoid>, CliError> {
    let mut out = Vec::with_capacity(per_body.len());
    for (i, mut list) in per_body.into_iter().enumerate() {
        match list.len() {
            1 => out.push(list.pop().expect("length checked")),
            0 => {
                return Err(CliError::Data(format!(
                    "identification needs one bounding ellipsoid per body; body {i} has none"
                )))
            }
            n => {
                return Err(CliError::Data(format!(
                    "identification needs one bounding ellipsoid per body; body {i} has {n}"
                )))
            }
        }
    }
    Ok(out)
}

/// Write ellipsoids in the canonical per-body form.
pub fn ellipsoids_to_json(per_body: &[Vec<Ellipsoid>]) -> String {
    let mut entries = Vec::new();
    for (body, list) in per_body.iter().enumerate() {
        for e in list {
            entries.push(EllipsoidJson {
                body,
                center: e.center().into(),
                shape: Some(rows3(&e.shape().matrix())),
                semi_axes: None,
                rotation: None,
            });
        }
    }
    serde_json::to_string_pretty(&EllipsoidsJson {
        format: MODEL_FORMAT,
        ellipsoids: entries,
    })
    .expect("ellipsoid serialization cannot fail")
}

/// Expected CSV layout for a trajectory log.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CsvSchema {
    /// Number of joints (fixes the column counts).
    pub n_joints: usize,
}

/// Read a trajectory CSV. The header names the columns
/// `t,q1..qn,tau1..taun[,v1..vn][,a1..an]`; rows with non-finite entries are
/// rejected with their line numbers.
pub fn load_csv(path: &Path, schema: CsvSchema) -> Result<RawLog, CliError> {
    let text = read_file(path)?;
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let n = schema.n_joints;
    let headers = reader
        .headers()
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
        .clone();
    let mut expected: Vec<String> = vec!["t".into()];
    for k in 1..=n {
        expected.push(format!("q{k}"));
    }
    for k in 1..=n {
        expected.push(format!("tau{k}"));
    }
    let with_v = headers.len() > expected.len();
    if with_v {
        for k in 1..=n {
            expected.push(format!("v{k}"));
        }
        for k in 1..=n {
            expected.push(format!("a{k}"));
        }
    }
    let got: Vec<String> = headers.iter().map(|h| h.trim().to_string()).collect();
    if got != expected {
        let missing: Vec<&String> = expected.iter().filter(|e| !got.contains(e)).collect();
        return Err(CliError::Data(format!(
            "{}: header mismatch; missing or misplaced columns: {}",
            path.display(),
            missing
                .iter()
                .map(|s| s.as_str())
                .collect::<Vec<_>>()
                .join(", ")
        )));
    }

    let mut times = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut bad_lines = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2; // header is line 1
        let record = record.map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let mut row = Vec::with_capacity(expected.len());
        let mut ok = record.len() == expected.len();
        for field in record.iter() {
            match field.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => row.push(v),
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            bad_lines.push(line);
            continue;
        }
        times.push(row[0]);
        rows.push(row);
    }
    if !bad_lines.is_empty() {
        return Err(CliError::Data(format!(
            "{}: rows with missing or non-finite values at lines {}",
            path.display(),
            bad_lines
                .iter()
                .map(|l| l.to_string())
                .collect::<Vec<_>>()
                .join(", ")
        )));
    }
    if rows.is_empty() {
        return Err(CliError::Data(format!("{}: no data rows", path.display())));
    }
    let ns = rows.len();
    let col = |offset: usize| DMatrix::from_fn(ns, n, |i, j| rows[i][offset + j]);
    let q = col(1);
    let tau = col(1 + n);
    let (vel, acc) = if with_v {
        (Some(col(1 + 2 * n)), Some(col(1 + 3 * n)))
    } else {
        (None, None)
    };
    Ok(RawLog {
        times,
        q,
        tau,
        vel,
        acc,
    })
}

/// Write a trajectory CSV in the canonical column order (velocities and
/// accelerations included when present).
pub fn save_csv(path: &Path, log: &RawLog) -> Result<(), CliError> {
    let n = log.n_joints();
    let mut out = String::new();
    out.push('t');
    for k in 1..=n {
        out.push_str(&format!(",q{k}"));
    }
    for k in 1..=n {
        out.push_str(&format!(",tau{k}"));
    }
    let with_v = log.vel.is_some() && log.acc.is_some();
    if with_v {
        for k in 1..=n {
            out.push_str(&format!(",v{k}"));
        }
        for k in 1..=n {
            out.push_str(&format!(",a{k}"));
        }
    }
    out.push('\n');
    // Plain float formatting is shortest-round-trip exact, so reading the
    // file back reproduces every value bit-for-bit.
    for i in 0..log.n_samples() {
        out.push_str(&format!("{}", log.times[i]));
        for j in 0..n {
            out.push_str(&format!(",{}", log.q[(i, j)]));
        }
        for j in 0..n {
            out.push_str(&format!(",{}", log.tau[(i, j)]));
        }
        if with_v {
            let (v, a) = (log.vel.as_ref().unwrap(), log.acc.as_ref().unwrap());
            for j in 0..n {
                out.push_str(&format!(",{}", v[(i, j)]));
            }
            for j in 0..n {
                out.push_str(&format!(",{}", a[(i, j)]));
            }
        }
        out.push('\n');
    }
    write_file(path, &out)
}

/// Residual CSV: time column plus one residual column per joint.
pub fn save_residuals(path: &Path, times: &[f64], residuals: &[DVector<f64>]) -> Result<(), CliError> {
    let n = residuals.first().map(|r| r.len()).unwrap_or(0);
    let mut out = String::new();
    out.push('t');
    for k in 1..=n {
        out.push_str(&format!(",r{k}"));
    }
    out.push('\n');
    for (t, r) in times.iter().zip(residuals.iter()) {
        out.push_str(&format!("{t}"));
        for j in 0..n {
            out.push_str(&format!(",{}", r[j]));
        }
        out.push('\n');
    }
    write_file(path, &out)
}

/// Read a text file, classifying a missing path as a usage error.
pub fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            CliError::Usage(format!("{}: file not found", path.display()))
        } else {
            CliError::Data(format!("{}: {e}", path.display()))
        }
    })
}

/// Write a text file.
pub fn write_file(path: &Path, content: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| CliError::Data(format!("{}: {e}", parent.display())))?;
        }
    }
    std::fs::write(path, content).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}
