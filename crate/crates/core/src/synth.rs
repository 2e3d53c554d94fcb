//! Synthetic trajectory datasets with planted cluster structure.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::traj::{default_checkpoint_steps, TrajectoryStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuiltinShape {
    Decreasing,
    Increasing,
    DoubleDescent,
    Flat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Shape {
    Builtin(BuiltinShape),
    Explicit(Vec<f64>),
}

fn default_source() -> String {
    "synthetic".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateSpec {
    pub name: String,
    pub shape: Shape,
    pub count: usize,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default = "default_source")]
    pub source: String,
}

const HIGH: f64 = 4.0;
const LOW: f64 = 0.5;
const DECAY_RATE: f64 = 3.0;
const BUMP_HEIGHT: f64 = 1.5;

fn decreasing(t: usize) -> Vec<f64> {
    let span = (t.max(2) - 1) as f64;
    (0..t)
        .map(|j| LOW + (HIGH - LOW) * (-DECAY_RATE * j as f64 / span).exp())
        .collect()
}

/// Base loss vector of a shape at `t` checkpoints.
///
/// * decreasing: geometric decay from 4.0 toward 0.5
/// * increasing: decreasing, reversed
/// * double_descent: decreasing plus a Gaussian bump centred at `t / 2`
/// * flat: constant 2.0
pub fn base_vector(shape: &Shape, t: usize) -> Result<Vec<f64>> {
    let v = match shape {
        Shape::Builtin(BuiltinShape::Decreasing) => decreasing(t),
        Shape::Builtin(BuiltinShape::Increasing) => {
            let mut v = decreasing(t);
            v.reverse();
            v
        }
        Shape::Builtin(BuiltinShape::DoubleDescent) => {
            let centre = (t / 2) as f64;
            let width = (t as f64 / 8.0).max(0.5);
            decreasing(t)
                .into_iter()
                .enumerate()
                .map(|(j, v)| {
                    let z = (j as f64 - centre) / width;
                    v + BUMP_HEIGHT * (-0.5 * z * z).exp()
                })
                .collect()
        }
        Shape::Builtin(BuiltinShape::Flat) => vec![2.0; t],
        Shape::Explicit(values) => {
            if values.len() != t {
                return Err(Error::argument(format!(
                    "explicit template has {} values, expected T = {t}",
                    values.len()
                )));
            }
            if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::argument("template base losses must be finite and >= 0"));
            }
            values.clone()
        }
    };
    Ok(v)
}

pub fn template_bases(templates: &[TemplateSpec], t: usize) -> Result<Vec<Vec<f64>>> {
    templates.iter().map(|s| base_vector(&s.shape, t)).collect()
}

/// Draws `count` noisy copies of every template. Returns the store and the
/// template index of each row. Row `r` draws its noise from stream `r` of a
/// ChaCha generator keyed by `seed`.
pub fn generate(templates: &[TemplateSpec], t: usize, seed: u64) -> Result<(TrajectoryStore, Vec<usize>)> {
    if t == 0 {
        return Err(Error::argument("T must be at least 1"));
    }
    if templates.is_empty() {
        return Err(Error::argument("no templates given"));
    }
    for spec in templates {
        if spec.count == 0 {
            return Err(Error::argument(format!("template `{}` has count 0", spec.name)));
        }
        if !spec.noise_sigma.is_finite() || spec.noise_sigma < 0.0 {
            return Err(Error::argument(format!(
                "template `{}` has invalid noise_sigma {}",
                spec.name, spec.noise_sigma
            )));
        }
    }
    let bases = template_bases(templates, t)?;

    let mut labels = Vec::new();
    let mut ids = Vec::new();
    let mut sources = Vec::new();
    for (ti, spec) in templates.iter().enumerate() {
        for c in 0..spec.count {
            labels.push(ti);
            ids.push(format!("{}-{c}", spec.name));
            sources.push(spec.source.clone());
        }
    }

    let mut losses = vec![0.0f32; labels.len() * t];
    losses
        .par_chunks_exact_mut(t)
        .zip(labels.par_iter())
        .enumerate()
        .for_each(|(row, (out, &ti))| {
            let base = &bases[ti];
            let sigma = templates[ti].noise_sigma;
            if sigma == 0.0 {
                for (o, b) in out.iter_mut().zip(base) {
                    *o = *b as f32;
                }
                return;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(row as u64);
            let normal = Normal::new(0.0, sigma).expect("sigma validated");
            for (o, b) in out.iter_mut().zip(base) {
                *o = (b + normal.sample(&mut rng)).max(0.0) as f32;
            }
        });

    let store = TrajectoryStore::from_flat(ids, sources, losses, default_checkpoint_steps(t))?;
    Ok((store, labels))
}

pub fn load_templates(path: impl AsRef<Path>) -> Result<Vec<TemplateSpec>> {
    let reader = BufReader::new(File::open(path.as_ref())?);
    serde_json::from_reader(reader).map_err(|e| Error::format(format!("template spec: {e}")))
}
