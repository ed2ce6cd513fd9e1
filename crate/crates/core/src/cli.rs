//! The `mshift` command-line surface.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde_json::{json, Value};

use crate::analytic::{self, BpePolicy, Convergence};
use crate::equivalence::{self, EquivalenceOptions, EquivalenceStatus};
use crate::error::{Error, Result};
use crate::factory::{self, Convention};
use crate::json;
use crate::lattice::MultiIndex;
use crate::linalg::{self, c64};
use crate::sampling;
use crate::shift;
use crate::structure::{self, ReductionOutcome};
use crate::tree::{self, BasesDoc, Decomposition, TreeInputDoc};
use crate::weights::{self, WeightFamily};

#[derive(Parser, Debug)]
#[command(name = "mshift", version, about = "Commuting operator-valued multishifts on truncated lattices")]
pub struct Cli {
    #[command(flatten)]
    pub config: RunConfig,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every subcommand.
#[derive(Args, Debug, Clone)]
pub struct RunConfig {
    /// Relative tolerance of the commuting check.
    #[arg(long, global = true, default_value_t = 1e-10)]
    pub tol_commuting: f64,
    /// Smallest admissible singular value of a weight.
    #[arg(long, global = true, default_value_t = 1e-12)]
    pub tol_invert: f64,
    /// Degree cap N for generated families and tree embeddings; restricts
    /// input families when smaller than their own cap.
    #[arg(long, global = true)]
    pub degree_cap: Option<usize>,
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,
    /// Random candidates tried by the unitary search.
    #[arg(long, global = true, default_value_t = 200)]
    pub budget: usize,
    #[arg(long, global = true, default_value_t = 5)]
    pub policy_window: usize,
    #[arg(long, global = true, default_value_t = 1e-3)]
    pub policy_margin: f64,
    /// Partial sums above this value count as divergent.
    #[arg(long, global = true, default_value_t = 1e12)]
    pub cap: f64,
    /// Exit with status 1 when a check or verdict fails.
    #[arg(long, global = true)]
    pub strict: bool,
    /// Write the result here instead of standard output.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Shapes, boundedness, commuting and invertibility report.
    Validate { family: PathBuf },
    /// B(alpha, beta), C(alpha, beta) and G_alpha.
    Moments {
        family: PathBuf,
        /// Multi-index such as `2,1`.
        #[arg(long)]
        alpha: String,
        /// Defaults to alpha.
        #[arg(long)]
        beta: Option<String>,
    },
    /// Circularity, wandering subspace, analytic depths and reduction.
    Props {
        family: PathBuf,
        #[arg(long, default_value_t = 100)]
        samples: usize,
    },
    /// Truncated reproducing kernel kappa(z, w).
    Kernel {
        family: PathBuf,
        /// Point as comma-separated coordinates `re` or `re:im`.
        #[arg(long, allow_hyphen_values = true)]
        z: String,
        #[arg(long, allow_hyphen_values = true)]
        w: String,
    },
    /// Bounded point evaluation and point spectrum at a point, or a CSV grid.
    Bpe {
        family: PathBuf,
        #[arg(long, allow_hyphen_values = true, conflicts_with = "grid_steps")]
        w: Option<String>,
        /// Radii r_k = grid_max * k / grid_steps for k = 1..=grid_steps.
        #[arg(long)]
        grid_steps: Option<usize>,
        #[arg(long, default_value_t = 1.0)]
        grid_max: f64,
        /// Grid direction (repeatable); defaults to all ones.
        #[arg(long, allow_hyphen_values = true)]
        direction: Vec<String>,
    },
    /// Unitary equivalence of two families.
    Equiv {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// Also check the block intertwiner on the assembled shifts.
        #[arg(long)]
        verify_intertwine: bool,
    },
    /// Embed a product of rooted trees as a multishift.
    EmbedTree { trees: PathBuf },
    /// Split a one-variable family into tree shifts.
    DecomposeShift {
        family: PathBuf,
        /// Bases and partitions document.
        bases: PathBuf,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, default_value_t = 1e-12)]
        coeff_tol: f64,
    },
    /// Emit a weight family JSON document.
    #[command(subcommand)]
    GenExample(GenExample),
}

#[derive(Subcommand, Debug)]
pub enum GenExample {
    /// Constant scalar weight on every axis.
    Classical {
        #[arg(long, default_value_t = 1)]
        d: usize,
        #[arg(long, default_value = "1", allow_hyphen_values = true)]
        weight: String,
    },
    /// The 2x2 row contraction family.
    Example33 {
        #[arg(long, default_value_t = 2)]
        d: usize,
    },
    /// Constant weight diag(a, b).
    Diag {
        #[arg(long, default_value_t = 1)]
        d: usize,
        #[arg(long, default_value_t = 2.0, allow_hyphen_values = true)]
        a: f64,
        #[arg(long, default_value_t = 0.5, allow_hyphen_values = true)]
        b: f64,
    },
    /// Weights derived from the square-root sequence B_alpha.
    Remark34 {
        #[arg(long, default_value_t = 2)]
        d: usize,
        #[arg(long, value_enum, default_value_t = ConventionArg::AsPrinted)]
        convention: ConventionArg,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ConventionArg {
    AsPrinted,
    Model,
}

impl From<ConventionArg> for Convention {
    fn from(c: ConventionArg) -> Self {
        match c {
            ConventionArg::AsPrinted => Convention::AsPrinted,
            ConventionArg::Model => Convention::Model,
        }
    }
}

/// What a subcommand produced: text and whether its verdict passed.
struct Outcome {
    text: String,
    ok: bool,
}

impl Outcome {
    fn json(v: Value, ok: bool) -> Self {
        Outcome {
            text: json::value_to_canonical(&v),
            ok,
        }
    }
}

/// Runs the CLI on `args` and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    let config = cli.config.clone();
    match execute(&cli.command, &config) {
        Ok(out) => {
            let written = match &config.output {
                Some(path) => fs::write(path, &out.text).map_err(Error::from),
                None => {
                    print!("{}", out.text);
                    Ok(())
                }
            };
            if let Err(e) = written {
                eprintln!("error: {e}");
                return 2;
            }
            if config.strict && !out.ok {
                1
            } else {
                0
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, Error::Schema { .. } | Error::MissingWeight { .. } | Error::Shape { .. }) {
                eprintln!("{SCHEMA_HELP}");
            }
            2
        }
    }
}

const SCHEMA_HELP: &str = "weight family schema: {\"d\": int, \"degree_cap\": int, \
\"fiber_dims\": {\"default\": int, \"overrides\": [{\"alpha\": [..], \"dim\": int}]}, \
\"weights\": [{\"j\": int (1-based), \"alpha\": [..], \"matrix\": [[[re, im], ..], ..]}]}";

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(Error::from)
}

fn load_family(path: &Path, config: &RunConfig) -> Result<WeightFamily> {
    let fam = WeightFamily::from_json(&read(path)?)?;
    match config.degree_cap {
        Some(n) if n < fam.cap() => restrict(&fam, n),
        _ => Ok(fam),
    }
}

/// The same weights on the smaller box `|alpha| <= cap`.
pub fn restrict(fam: &WeightFamily, cap: usize) -> Result<WeightFamily> {
    let bx = crate::lattice::TruncationBox::new(fam.dim(), cap)?;
    let dims: Vec<usize> = bx.enumerate().iter().map(|a| fam.fiber_dim(a)).collect();
    WeightFamily::from_fn(bx, weights::FiberMap::from_dims(&bx, &dims), |j, a| fam.weight(j, a).clone())
}

/// Parses `2,0,1` or `[2,0,1]`.
pub fn parse_multi_index(s: &str) -> Result<MultiIndex> {
    let t = s.trim().trim_start_matches('[').trim_end_matches(']');
    let comps = t
        .split(',')
        .map(|x| x.trim().parse::<usize>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::Schema {
            path: "alpha".into(),
            message: format!("cannot parse multi-index {s:?}: {e}"),
        })?;
    if comps.is_empty() {
        return Err(Error::Schema {
            path: "alpha".into(),
            message: "empty multi-index".into(),
        });
    }
    Ok(MultiIndex::new(comps))
}

/// Parses `re` or `re:im`.
pub fn parse_complex(s: &str) -> Result<Complex64> {
    let bad = |e: std::num::ParseFloatError| Error::Schema {
        path: "point".into(),
        message: format!("cannot parse complex number {s:?}: {e}"),
    };
    match s.split_once(':') {
        Some((re, im)) => Ok(c64(re.trim().parse().map_err(bad)?, im.trim().parse().map_err(bad)?)),
        None => Ok(c64(s.trim().parse().map_err(bad)?, 0.0)),
    }
}

/// Parses a point `z_1,z_2,...` with coordinates `re` or `re:im`.
pub fn parse_point(s: &str, d: usize) -> Result<Vec<Complex64>> {
    let pts = s.split(',').map(parse_complex).collect::<Result<Vec<_>>>()?;
    if pts.len() != d {
        return Err(Error::Schema {
            path: "point".into(),
            message: format!("point {s:?} has {} coordinates, expected {d}", pts.len()),
        });
    }
    Ok(pts)
}

fn matrix_value(m: &linalg::CMatrix) -> Value {
    serde_json::to_value(weights::matrix_to_doc(m)).expect("matrix")
}

fn policy(config: &RunConfig) -> BpePolicy {
    BpePolicy {
        window: config.policy_window,
        margin: config.policy_margin,
        cap: config.cap,
    }
}

fn execute(cmd: &Command, config: &RunConfig) -> Result<Outcome> {
    match cmd {
        Command::Validate { family } => validate(&load_family(family, config)?, config),
        Command::Moments { family, alpha, beta } => {
            let fam = load_family(family, config)?;
            let alpha = parse_multi_index(alpha)?;
            let beta = match beta {
                Some(b) => parse_multi_index(b)?,
                None => alpha.clone(),
            };
            if alpha.dim() != fam.dim() || beta.dim() != fam.dim() {
                return Err(Error::Domain(format!("multi-indices must have {} components", fam.dim())));
            }
            let b = shift::moment_b(&fam, &alpha, &beta)?;
            let c = shift::moment_c(&fam, &alpha, &beta).ok();
            let g = if fam.truncation().contains(&alpha) {
                Some(shift::gram_g(&fam, &alpha))
            } else {
                None
            };
            Ok(Outcome::json(
                json!({
                    "alpha": alpha,
                    "beta": beta,
                    "B": matrix_value(&b),
                    "C": c.as_ref().map(matrix_value),
                    "G": g.as_ref().map(matrix_value),
                }),
                true,
            ))
        }
        Command::Props { family, samples } => props(&load_family(family, config)?, *samples, config),
        Command::Kernel { family, z, w } => {
            let fam = load_family(family, config)?;
            let gram = analytic::build_gram(&fam, config.tol_invert)?;
            let z = parse_point(z, fam.dim())?;
            let w = parse_point(w, fam.dim())?;
            let k = analytic::kernel_eval(&gram, &z, &w);
            Ok(Outcome::json(
                json!({
                    "z": z,
                    "w": w,
                    "value": matrix_value(&k.value),
                    "last_layer_norm": k.last_layer_norm,
                }),
                true,
            ))
        }
        Command::Bpe {
            family,
            w,
            grid_steps,
            grid_max,
            direction,
        } => {
            let fam = load_family(family, config)?;
            let gram = analytic::build_gram(&fam, config.tol_invert)?;
            let pol = policy(config);
            match (w, grid_steps) {
                (Some(w), _) => {
                    let w = parse_point(w, fam.dim())?;
                    let v = analytic::bpe_test(&gram, &w, &pol);
                    let p = analytic::pointspec_test(&gram, &w, &pol);
                    let ok = v.classification == Convergence::Bpe;
                    Ok(Outcome::json(
                        json!({
                            "bpe": v,
                            "point_spectrum": p,
                            "policy": pol,
                        }),
                        ok,
                    ))
                }
                (None, Some(steps)) => {
                    if *steps == 0 {
                        return Err(Error::Domain("grid-steps must be positive".into()));
                    }
                    let radii: Vec<f64> = (1..=*steps).map(|k| grid_max * k as f64 / *steps as f64).collect();
                    let dirs = if direction.is_empty() {
                        vec![vec![c64(1.0, 0.0); fam.dim()]]
                    } else {
                        direction.iter().map(|s| parse_point(s, fam.dim())).collect::<Result<_>>()?
                    };
                    let rows = analytic::bpe_grid_scan(&gram, &radii, &dirs, &pol);
                    let ok = !rows.iter().any(|r| r.disagrees());
                    Ok(Outcome {
                        text: analytic::grid_to_csv(fam.dim(), &rows),
                        ok,
                    })
                }
                (None, None) => Err(Error::Domain("bpe needs --w or --grid-steps".into())),
            }
        }
        Command::Equiv { a, b, verify_intertwine } => {
            let fa = load_family(a, config)?;
            let fb = load_family(b, config)?;
            let opts = EquivalenceOptions {
                budget: config.budget,
                seed: config.seed,
                tol_invert: config.tol_invert,
                verify_intertwine: *verify_intertwine,
                ..EquivalenceOptions::default()
            };
            let v = equivalence::decide(&fa, &fb, &opts)?;
            let ok = v.status == EquivalenceStatus::Equivalent;
            Ok(Outcome::json(serde_json::to_value(&v).expect("verdict"), ok))
        }
        Command::EmbedTree { trees } => {
            let doc: TreeInputDoc = json::parse(&read(trees)?)?;
            let cap = config.degree_cap.unwrap_or(doc.degree_cap);
            let (product, w) = doc.build()?;
            let e = tree::embed(&product, &w, cap)?;
            let report = e.family.check_commuting(config.tol_commuting);
            let ok = report.commuting && e.intertwining_residual == 0.0;
            Ok(Outcome::json(
                json!({
                    "family": e.family.to_document(),
                    "strata": e.strata,
                    "intertwining_residual": e.intertwining_residual,
                    "commuting": report,
                }),
                ok,
            ))
        }
        Command::DecomposeShift {
            family,
            bases,
            tol,
            coeff_tol,
        } => {
            let fam = load_family(family, config)?;
            let doc: BasesDoc = json::parse(&read(bases)?)?;
            let mats = doc
                .bases
                .iter()
                .enumerate()
                .map(|(k, m)| {
                    weights::matrix_from_doc(m).map_err(|message| Error::Schema {
                        path: format!("bases[{k}]"),
                        message,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            match tree::decompose_unilateral(&fam, &mats, &doc.partition, *tol, *coeff_tol)? {
                Decomposition::Forest {
                    trees,
                    intertwining_residual,
                    leaves,
                } => {
                    let round_trip = tree::round_trip_residual(&fam, &mats, &trees)?;
                    let docs: Vec<Value> = trees
                        .iter()
                        .map(|t| {
                            let ws: Vec<Value> = t
                                .weights
                                .iter()
                                .enumerate()
                                .filter_map(|(v, w)| w.map(|w| json!({"v": v, "value": [w.re, w.im]})))
                                .collect();
                            json!({"parent": t.parent, "weights": ws, "labels": t.labels})
                        })
                        .collect();
                    Ok(Outcome::json(
                        json!({
                            "status": "forest",
                            "trees": docs,
                            "intertwining_residual": intertwining_residual,
                            "round_trip_residual": round_trip,
                            "leaves": leaves,
                        }),
                        true,
                    ))
                }
                Decomposition::NotApplicable { reason, level, index } => Ok(Outcome::json(
                    json!({"status": "not_applicable", "reason": reason, "level": level, "index": index}),
                    false,
                )),
            }
        }
        Command::GenExample(g) => {
            let cap = config.degree_cap.unwrap_or(5);
            let fam = match g {
                GenExample::Classical { d, weight } => factory::classical(*d, cap, parse_complex(weight)?)?,
                GenExample::Example33 { d } => factory::example33(*d, cap)?,
                GenExample::Diag { d, a, b } => factory::diag_powers(*d, cap, *a, *b)?,
                GenExample::Remark34 { d, convention } => factory::remark34_family(*d, cap, (*convention).into())?.1,
            };
            Ok(Outcome {
                text: fam.to_json(),
                ok: true,
            })
        }
    }
}

fn validate(fam: &WeightFamily, config: &RunConfig) -> Result<Outcome> {
    let commuting = fam.check_commuting(config.tol_commuting);
    let invertible = match fam.check_invertible(config.tol_invert) {
        Ok(r) => serde_json::to_value(r).expect("report"),
        Err(e) => json!({"invertible": false, "error": e.to_string()}),
    };
    let normal: Vec<bool> = (0..fam.dim()).map(|j| shift::normality_verdict(fam, j, 1e-12).normal).collect();
    let ok = commuting.commuting;
    Ok(Outcome::json(
        json!({
            "d": fam.dim(),
            "degree_cap": fam.cap(),
            "total_dim": fam.total_dim(),
            "bounded": fam.check_bounded(),
            "commuting": commuting,
            "invertible": invertible,
            "normal": normal,
        }),
        ok,
    ))
}

fn props(fam: &WeightFamily, samples: usize, config: &RunConfig) -> Result<Outcome> {
    let mut circ: f64 = 0.0;
    for k in 0..samples {
        let lambda = sampling::random_torus_point(&mut sampling::rng(config.seed, k as u64), fam.dim());
        circ = circ.max(structure::circular_residual(fam, &lambda)?);
    }
    let wand = structure::wandering_span_dim(fam, linalg::RANK_RTOL);
    let depths: Vec<Vec<usize>> = (0..fam.dim()).map(|j| structure::analytic_depth(fam, j)).collect();
    let reduction = match structure::left_invertible_reduce(fam, config.tol_invert) {
        ReductionOutcome::Applied(r) => json!({
            "status": "applied",
            "reduced_degree_cap": r.family.cap(),
            "reduced_fiber_dim": r.family.constant_fiber(),
            "intertwining_residual": r.intertwining_residual,
            "min_sigma": r.min_sigma,
            "commuting_residual": r.commuting_residual,
        }),
        ReductionOutcome::NotApplicable { reason, witness } => json!({
            "status": "not_applicable",
            "reason": reason,
            "witness": witness,
        }),
    };
    let ok = circ <= 1e-12 && wand.holds();
    Ok(Outcome::json(
        json!({
            "circular_residual_max": circ,
            "wandering_dim": wand.span_dim,
            "D": wand.total_dim,
            "analytic_depths": depths,
            "reduction": reduction,
        }),
        ok,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_points_and_indices() {
        assert_eq!(parse_multi_index("[2, 0,1]").unwrap(), MultiIndex::new(vec![2, 0, 1]));
        assert!(parse_multi_index("a,b").is_err());
        assert_eq!(parse_point("0.5,-1:2", 2).unwrap(), vec![c64(0.5, 0.0), c64(-1.0, 2.0)]);
        assert!(parse_point("1", 2).is_err());
    }

    #[test]
    fn unknown_subcommand_is_usage_error() {
        assert_eq!(run(["mshift", "frobnicate"]), 2);
    }
}
