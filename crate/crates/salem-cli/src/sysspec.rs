//! System references: builtin families or JSON files, parseable both from a
//! CLI argument string and from pipeline configs.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Result};
use serde::{Deserialize, Serialize};

use salem_core::configsearch::{
    make_colinear_system, make_parallelogram_system, make_triangle_system,
    make_vandermonde_system, ExceptionalSubspace,
};
use salem_core::linalg::Mat;
use salem_core::linsys::MatrixSystem;

/// A system source, as written in pipeline configs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SystemSpec {
    /// The 3-term progression system (colinear, `n = 1`, `lam = 2`).
    Ap,
    Colinear { n: usize, lam: f64 },
    Triangle { theta: f64, lam: f64 },
    Parallelogram { n: usize },
    Vandermonde { a: Vec<f64>, eta: u32, d: u32 },
    /// The printed three-matrix system whose form vanishes on a small ball.
    #[serde(rename = "counterexample-5-6")]
    Counterexample56,
    File { path: PathBuf },
}

/// The three general matrices for which the form vanishes identically on
/// `f = 1_{B((0,1), 1/4)}`.
pub fn counterexample_system() -> MatrixSystem {
    let a1 = Mat::from_rows(&[vec![1.0, 0.0, 0.0, 0.0], vec![0.0, 1.0, 0.0, 0.0]]);
    let a2 = Mat::from_rows(&[vec![0.0, 0.0, 1.0, 0.0], vec![0.0, 0.0, 0.0, 1.0]]);
    let a3 = Mat::from_rows(&[vec![0.0, 1.0, 1.0, 0.0], vec![1.0, 0.0, 0.0, 1.0]]);
    MatrixSystem::from_a(2, 3, 4, vec![a1, a2, a3]).expect("static system is valid")
}

impl SystemSpec {
    /// Builds the system and its canonical exceptional subspaces (the origin
    /// for families without designated ones).
    pub fn build(&self) -> Result<(MatrixSystem, Vec<ExceptionalSubspace>)> {
        let origin_for = |sys: &MatrixSystem| vec![ExceptionalSubspace::origin(sys.m() - sys.n())];
        match self {
            SystemSpec::Ap => {
                let sys = make_colinear_system(1, 2.0).map_err(|e| anyhow!("{e}"))?;
                let v = origin_for(&sys);
                Ok((sys, v))
            }
            SystemSpec::Colinear { n, lam } => {
                let sys = make_colinear_system(*n, *lam).map_err(|e| anyhow!("{e}"))?;
                let v = origin_for(&sys);
                Ok((sys, v))
            }
            SystemSpec::Triangle { theta, lam } => {
                let sys = make_triangle_system(*theta, *lam).map_err(|e| anyhow!("{e}"))?;
                let v = origin_for(&sys);
                Ok((sys, v))
            }
            SystemSpec::Parallelogram { n } => {
                make_parallelogram_system(*n).map_err(|e| anyhow!("{e}"))
            }
            SystemSpec::Vandermonde { a, eta, d } => {
                make_vandermonde_system(a, *eta, *d).map_err(|e| anyhow!("{e}"))
            }
            SystemSpec::Counterexample56 => Ok((counterexample_system(), Vec::new())),
            SystemSpec::File { path } => {
                let sys = crate::formats::load_system(path)?;
                let v = origin_for(&sys);
                Ok((sys, v))
            }
        }
    }

    /// Parses a CLI argument: a builtin name (`ap`, `triangle:theta,lam`,
    /// `colinear:n,lam`, `parallelogram:n`, `vandermonde:a1,a2,..:eta:d`,
    /// `counterexample-5-6`) or a path to a system JSON file.
    pub fn parse_arg(s: &str) -> Result<Self> {
        let (head, rest) = match s.split_once(':') {
            Some((h, r)) => (h, Some(r)),
            None => (s, None),
        };
        let nums = |r: Option<&str>| -> Result<Vec<f64>> {
            r.ok_or_else(|| anyhow!("missing parameters in {s:?}"))?
                .split(',')
                .map(|x| x.trim().parse::<f64>().map_err(|e| anyhow!("bad number {x:?}: {e}")))
                .collect()
        };
        match head {
            "ap" => Ok(SystemSpec::Ap),
            "colinear" => {
                let v = nums(rest)?;
                if v.len() != 2 {
                    bail!("colinear needs n,lam");
                }
                Ok(SystemSpec::Colinear { n: v[0] as usize, lam: v[1] })
            }
            "triangle" => {
                let v = nums(rest)?;
                if v.len() != 2 {
                    bail!("triangle needs theta,lam");
                }
                Ok(SystemSpec::Triangle { theta: v[0], lam: v[1] })
            }
            "parallelogram" => {
                let v = nums(rest)?;
                if v.len() != 1 {
                    bail!("parallelogram needs n");
                }
                Ok(SystemSpec::Parallelogram { n: v[0] as usize })
            }
            "vandermonde" => {
                let parts: Vec<&str> = rest.ok_or_else(|| anyhow!("missing parameters"))?.split(':').collect();
                if parts.len() != 3 {
                    bail!("vandermonde needs a1,a2,..:eta:d");
                }
                let a: Vec<f64> = parts[0]
                    .split(',')
                    .map(|x| x.trim().parse::<f64>().map_err(|e| anyhow!("{e}")))
                    .collect::<Result<_>>()?;
                Ok(SystemSpec::Vandermonde {
                    a,
                    eta: parts[1].trim().parse()?,
                    d: parts[2].trim().parse()?,
                })
            }
            "counterexample-5-6" => Ok(SystemSpec::Counterexample56),
            _ => {
                let path = Path::new(s);
                if path.exists() {
                    Ok(SystemSpec::File { path: path.to_path_buf() })
                } else {
                    bail!("unknown system {s:?} (not a builtin, and no such file)")
                }
            }
        }
    }
}
