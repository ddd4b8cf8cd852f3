//! Drivers for the numerical studies: condition-number sweeps, instrumented solves and the
//! channel with floating inclusions.

use std::ops::Range;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assembly::{BlockSystem, LoadData, PhysParams, ZeroLoad};
use crate::error::{Error, Result};
use crate::frac_interface::InterfaceOperator;
use crate::mesh::{BcConfig, DomainSpec, Mesh};
use crate::mms::MmsLoad;
use crate::minres::{check_residual_bound, minres_solve, symmetrize_hull, BoundCheck, MinresOptions, SolveLog};
use crate::precond::{deflated_riesz_dense, deflation_vectors, BlockPreconditioner, Deflation, DeflatedPreconditioner};
use crate::spectrum::{condition_numbers, generalized_eigs, Spectrum, DENSE_BUDGET};
use crate::sparse::{dot, LinearOperator};

/// Geometry used for a configuration: stacked unit squares, or a channel with two
/// inclusions for the multi-inclusion case.
pub fn default_spec(config: BcConfig) -> DomainSpec {
    match config {
        BcConfig::MultiInclusion => DomainSpec::channel(2),
        _ => DomainSpec::stacked(),
    }
}

/// Number of eigenvalues excluded for the effective condition number: the near-kernel
/// dimension, or the exact zero mode for EE.
pub fn near_kernel_dim(mesh: &Mesh) -> usize {
    match mesh.config {
        Some(BcConfig::NE | BcConfig::EN | BcConfig::EE) => 1,
        Some(BcConfig::MultiInclusion) => mesh.num_darcy_components(),
        _ => 0,
    }
}

/// A tagged mesh with its assembled system and preconditioner.
pub struct Case {
    pub mesh: Mesh,
    pub system: BlockSystem,
    pub precond: BlockPreconditioner,
}

impl Case {
    pub fn build(spec: &DomainSpec, config: BcConfig, params: PhysParams, nref: usize, data: &dyn LoadData) -> Result<Self> {
        let mesh = Mesh::build(spec, nref, config)?;
        let iface = InterfaceOperator::new(&mesh, params)?;
        let system = BlockSystem::assemble(&mesh, params, data, &iface)?;
        let precond = BlockPreconditioner::new(&system, iface)?;
        Ok(Self { mesh, system, precond })
    }

    /// Deflation for the configuration's near kernel, weighted by `gamma_mult` times the
    /// parameter rule. Empty for configurations without one.
    pub fn deflation(&self, gamma_mult: f64) -> Result<Deflation> {
        let (vecs, rule) = deflation_vectors(&self.mesh, &self.system.layout);
        match rule {
            Some(rule) => Deflation::new(vecs, rule.gamma(&self.system.params, gamma_mult), &self.system.n),
            None => Ok(Deflation::empty()),
        }
    }

    /// Dense spectrum of the preconditioned pencil, optionally with deflation. `drop`
    /// near-kernel values are excluded from the hull.
    pub fn spectrum(&self, deflation: Option<&Deflation>, drop: usize) -> Result<Spectrum> {
        let dim = self.system.dim();
        if dim > DENSE_BUDGET {
            return Err(Error::OverBudget { dim, budget: DENSE_BUDGET });
        }
        let a = self.system.a.to_dense();
        let n = match deflation {
            Some(d) => deflated_riesz_dense(&self.system.n, d)?,
            None => self.system.n.to_dense(),
        };
        let eigs = generalized_eigs(a.as_ref(), n.as_ref(), DENSE_BUDGET)?;
        Spectrum::new(eigs, self.system.essential.len(), drop)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CondRow {
    pub config: BcConfig,
    pub mu: f64,
    #[serde(rename = "K")]
    pub k: f64,
    pub nref: usize,
    pub h: f64,
    pub dim: usize,
    pub kappa: f64,
    pub kappa_eff: f64,
    /// Smallest-magnitude eigenvalue.
    pub lambda_min: f64,
    pub deflated: bool,
}

/// Condition numbers at one parameter point. With `gamma_mult`, the deflated pencil is used.
pub fn condition_point(config: BcConfig, params: PhysParams, nref: usize, gamma_mult: Option<f64>) -> Result<CondRow> {
    let case = Case::build(&default_spec(config), config, params, nref, &ZeroLoad)?;
    let drop = near_kernel_dim(&case.mesh);
    let defl = gamma_mult.map(|g| case.deflation(g)).transpose()?;
    let spec = case.spectrum(defl.as_ref(), drop)?;
    // with deflation the near kernel is no longer isolated, so nothing is dropped
    let (kappa, kappa_eff) = condition_numbers(&spec.active, if defl.is_some() { 0 } else { drop })?;
    Ok(CondRow {
        config,
        mu: params.mu,
        k: params.k,
        nref,
        h: case.mesh.h,
        dim: case.system.dim(),
        kappa,
        kappa_eff,
        lambda_min: spec.smallest(),
        deflated: defl.is_some(),
    })
}

/// One row per `(mu, K, nref)`; points over the dense budget are skipped with a warning
/// on stderr.
pub fn cond_sweep(
    config: BcConfig,
    mus: &[f64],
    ks: &[f64],
    nrefs: &[usize],
    alpha: f64,
    gamma_mult: Option<f64>,
) -> Result<Vec<CondRow>> {
    let mut rows = Vec::new();
    for &nref in nrefs {
        for &mu in mus {
            for &k in ks {
                match condition_point(config, PhysParams::new(mu, k, alpha)?, nref, gamma_mult) {
                    Ok(r) => rows.push(r),
                    Err(Error::OverBudget { dim, budget }) => {
                        eprintln!("skipping mu={mu:e} K={k:e} nref={nref}: dimension {dim} over budget {budget}")
                    }
                    Err(e) => return Err(e),
                }
            }
        }
    }
    Ok(rows)
}

pub fn write_cond_csv<W: std::io::Write>(rows: &[CondRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "config,mu,K,nref,h,dim,kappa,kappa_eff,lambda_min,deflated")?;
    for r in rows {
        writeln!(
            w,
            "{},{:e},{:e},{},{:.6e},{},{:.10e},{:.10e},{:.10e},{}",
            r.config, r.mu, r.k, r.nref, r.h, r.dim, r.kappa, r.kappa_eff, r.lambda_min, r.deflated
        )?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveSettings {
    pub reduction: f64,
    pub maxit: usize,
    pub deflate: bool,
    pub gamma_mult: f64,
    /// Record harmonic Ritz values, the spectrum, `F_k` and the residual bound check.
    pub diagnostic: bool,
    pub seed: u64,
    /// Use the manufactured-solution data instead of a random right-hand side.
    pub manufactured: bool,
}

impl Default for SolveSettings {
    fn default() -> Self {
        Self { reduction: 1e-12, maxit: 2000, deflate: false, gamma_mult: 1.0, diagnostic: false, seed: 2024, manufactured: false }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolveOutcome {
    pub log: SolveLog,
    pub iterations: usize,
    pub converged: bool,
    pub plateaus: Vec<Range<usize>>,
    /// Present in diagnostic mode.
    pub spectrum: Option<Spectrum>,
    pub bound: Option<BoundCheck>,
    /// The same check on the hull with equal-length intervals.
    pub bound_symmetrized: Option<BoundCheck>,
    pub solution: Vec<f64>,
    pub seconds: f64,
}

/// Minimum run length and residual ratio of a plateau.
pub const PLATEAU_LEN: usize = 10;
pub const PLATEAU_RATIO: f64 = 0.99;

/// Seeded uniform random right-hand side, zero on essential rows, scaled to unit norm in
/// the preconditioner inner product.
pub fn random_rhs(case: &Case, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b: Vec<f64> = (0..case.system.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    for &i in &case.system.essential.indices {
        b[i] = 0.0;
    }
    let z = case.precond.apply_vec(&b);
    let s = dot(&b, &z).sqrt();
    b.iter_mut().for_each(|v| *v /= s);
    b
}

/// Runs MINRES on `b` with the plain or deflated preconditioner.
pub fn solve_case(case: &Case, b: &[f64], x0: Option<&[f64]>, settings: &SolveSettings) -> Result<SolveOutcome> {
    let start = Instant::now();
    let opts = MinresOptions {
        reduction: settings.reduction,
        maxit: settings.maxit,
        diagnostic: settings.diagnostic,
        ..Default::default()
    };
    let defl = if settings.deflate { Some(case.deflation(settings.gamma_mult)?) } else { None };
    let (x, mut log) = match &defl {
        Some(d) => {
            let m = DeflatedPreconditioner { base: &case.precond, deflation: d };
            minres_solve(&case.system.a, &m, b, x0, &opts)?
        }
        None => minres_solve(&case.system.a, &case.precond, b, x0, &opts)?,
    };
    let (mut spectrum, mut bound, mut bound_symmetrized) = (None, None, None);
    if settings.diagnostic {
        // the bound isolates the single smallest eigenvalue
        let spec = case.spectrum(defl.as_ref(), 1)?;
        log.annotate_f_factor(&spec.active);
        if let Some(h) = spec.hull {
            bound = Some(check_residual_bound(&log, h));
            bound_symmetrized = Some(check_residual_bound(&log, symmetrize_hull(h)));
        }
        spectrum = Some(spec);
    }
    Ok(SolveOutcome {
        iterations: log.iterations(),
        converged: log.converged(),
        plateaus: log.plateaus(PLATEAU_LEN, PLATEAU_RATIO),
        log,
        spectrum,
        bound,
        bound_symmetrized,
        solution: x,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Builds the case on the default geometry and solves with a seeded random right-hand side
/// or the manufactured data.
pub fn run_solve(config: BcConfig, params: PhysParams, nref: usize, settings: &SolveSettings) -> Result<SolveOutcome> {
    if settings.manufactured {
        if config == BcConfig::MultiInclusion {
            return Err(Error::Config("manufactured data exist only for the stacked geometry".into()));
        }
        let case = Case::build(&default_spec(config), config, params, nref, &MmsLoad::new(params))?;
        return solve_case(&case, &case.system.rhs, Some(&case.system.initial_guess()), settings);
    }
    let case = Case::build(&default_spec(config), config, params, nref, &ZeroLoad)?;
    let b = random_rhs(&case, settings.seed);
    solve_case(&case, &b, None, settings)
}

/// Pressure-driven channel: traction `-p n` with `p = 1` on the inlet and `p = 0` on the
/// outlet; walls are no-slip.
#[derive(Clone, Copy, Debug)]
pub struct ChannelLoad {
    pub inlet_x: f64,
}

impl LoadData for ChannelLoad {
    fn stokes_traction(&self, x: [f64; 2], n: [f64; 2]) -> [f64; 2] {
        let p = if (x[0] - self.inlet_x).abs() < 1e-12 { 1.0 } else { 0.0 };
        [-p * n[0], -p * n[1]]
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FloatingOutcome {
    pub inclusions: usize,
    pub dim: usize,
    pub plain: SolveOutcome,
    pub deflated: SolveOutcome,
}

/// Channel flow around `inclusions` porous squares, solved with the plain and the
/// per-inclusion deflated preconditioner.
pub fn run_floating(params: PhysParams, nref: usize, inclusions: usize, settings: &SolveSettings) -> Result<FloatingOutcome> {
    if inclusions == 0 {
        return Err(Error::Config("at least one inclusion is required".into()));
    }
    let spec = DomainSpec::channel(inclusions);
    let load = ChannelLoad { inlet_x: spec.stokes_rect.x0 };
    let case = Case::build(&spec, BcConfig::MultiInclusion, params, nref, &load)?;
    let b = case.system.rhs.clone();
    let x0 = case.system.initial_guess();
    let plain = solve_case(&case, &b, Some(&x0), &SolveSettings { deflate: false, ..settings.clone() })?;
    let deflated = solve_case(&case, &b, Some(&x0), &SolveSettings { deflate: true, ..settings.clone() })?;
    Ok(FloatingOutcome { inclusions, dim: case.system.dim(), plain, deflated })
}
