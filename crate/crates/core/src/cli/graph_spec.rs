use std::str::FromStr;

use crate::error::{Error, Result};
use crate::graphs::{apply_noise_mask, apply_orientation_mask, build_prior, AdjacencyMatrix, SelectionMask, DEFAULT_RHO_NOISE};
use crate::scenesim::Scene;

/// Graph description accepted by the `graph` command.
#[derive(Clone, Debug, PartialEq)]
pub enum GraphSpec {
    Complete(Option<usize>),
    Span { t: usize, delta: usize },
    KNearest(usize),
    Prior { rho: f64, orientation: bool, rho_noise: Option<f64> },
}

fn bad(spec: &str) -> Error {
    Error::Config(format!("invalid graph spec {spec:?}"))
}

fn num<T: FromStr>(s: &str, spec: &str) -> Result<T> {
    s.parse().map_err(|_| bad(spec))
}

impl FromStr for GraphSpec {
    type Err = Error;

    fn from_str(spec: &str) -> Result<Self> {
        let parts: Vec<&str> = spec.split(':').collect();
        match parts.as_slice() {
            ["complete"] => Ok(GraphSpec::Complete(None)),
            ["complete", n] => Ok(GraphSpec::Complete(Some(num(n, spec)?))),
            ["span", t, delta] => Ok(GraphSpec::Span { t: num(t, spec)?, delta: num(delta, spec)? }),
            ["knn", k] => Ok(GraphSpec::KNearest(num(k, spec)?)),
            ["prior", rho, rest @ ..] => {
                let mut out = GraphSpec::Prior { rho: num(rho, spec)?, orientation: false, rho_noise: None };
                let GraphSpec::Prior { orientation, rho_noise, .. } = &mut out else { unreachable!() };
                for flag in rest {
                    match flag.split_once('=') {
                        None if *flag == "ori" => *orientation = true,
                        None if *flag == "noise" => *rho_noise = Some(DEFAULT_RHO_NOISE),
                        Some(("noise", r)) => *rho_noise = Some(num(r, spec)?),
                        _ => return Err(bad(spec)),
                    }
                }
                Ok(out)
            }
            _ => Err(bad(spec)),
        }
    }
}

impl GraphSpec {
    pub fn needs_scene(&self) -> bool {
        matches!(self, GraphSpec::KNearest(_) | GraphSpec::Prior { .. } | GraphSpec::Complete(None))
    }

    pub fn build(&self, scene: Option<&Scene>) -> Result<(AdjacencyMatrix, Option<SelectionMask>)> {
        let scene_or_err = || scene.ok_or_else(|| Error::Config("this graph spec needs --scene".into()));
        match *self {
            GraphSpec::Complete(Some(n)) => Ok((AdjacencyMatrix::complete(n)?, None)),
            GraphSpec::Complete(None) => Ok((AdjacencyMatrix::complete(scene_or_err()?.n_nodes())?, None)),
            GraphSpec::Span { t, delta } => Ok((AdjacencyMatrix::temporal_span(t, delta)?, None)),
            GraphSpec::KNearest(k) => Ok((AdjacencyMatrix::k_nearest(&scene_or_err()?.nodes, k)?, None)),
            GraphSpec::Prior { rho, orientation, rho_noise } => {
                let scene = scene_or_err()?;
                let (_, mut mask) = build_prior(scene, rho)?;
                if orientation {
                    mask = apply_orientation_mask(&mask, scene)?;
                }
                if let Some(r) = rho_noise {
                    mask = apply_noise_mask(&mask, scene, r)?;
                }
                Ok((AdjacencyMatrix::from_selection(&mask), Some(mask)))
            }
        }
    }
}
