//! Implicit time marching of the coupled slip-displacement problem.
//!
//! Every step solves the monolithic system with a full Newton iteration.
//! Each iteration re-evaluates the constitutive update from the committed
//! state and the accumulated increment, so a step can be retried with a
//! smaller dt without any state rollback. Loading is organised in phases
//! that carry their own constraint sets; phase boundaries and load-path
//! vertices are hit exactly.

pub mod linear;

pub use linear::SparseLu;

use crate::bulk::BulkMaterialParams;
use crate::fem::{assemble, ConstraintSet, DofClass, DofMap, FieldState, MixedMesh};
use crate::gb::GbMaterialParams;
use crate::{Error, Result};

pub struct Model {
    pub mesh: MixedMesh,
    pub bulk: BulkMaterialParams,
    pub gb: GbMaterialParams,
}

/// A loading phase: the constraint set in force until `t_end`.
pub struct Phase {
    pub t_end: f64,
    pub constraints: ConstraintSet,
    /// Optional cap on the step size while this phase is active; lets a
    /// program resolve a switch or reversal finely without paying for small
    /// steps everywhere. Effective cap is `min(dt_max, cfg.dt)`.
    pub dt_max: Option<f64>,
}

impl Phase {
    pub fn new(t_end: f64, constraints: ConstraintSet) -> Self {
        Phase { t_end, constraints, dt_max: None }
    }

    pub fn with_dt(t_end: f64, constraints: ConstraintSet, dt_max: f64) -> Self {
        Phase { t_end, constraints, dt_max: Some(dt_max) }
    }
}

pub struct LoadProgram {
    pub phases: Vec<Phase>,
    /// Scalar load factor; prescribed dofs move by `scale * d(load)`.
    pub load: Box<dyn Fn(f64) -> f64>,
    /// Times the marcher must land on exactly (slope changes, sampling
    /// instants). Phase boundaries are implied.
    pub vertices: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Nominal (also maximal) time step.
    pub dt: f64,
    /// Abort when cutbacks push the step below this.
    pub dt_min: f64,
    pub newton_tol_rel: f64,
    pub newton_tol_abs: f64,
    pub max_iterations: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            dt: 0.01,
            dt_min: 1e-9,
            newton_tol_rel: 1e-9,
            newton_tol_abs: 1e-9,
            max_iterations: 25,
        }
    }
}

/// Snapshot handed to the commit callback after every accepted step.
pub struct Committed<'a> {
    pub step: usize,
    pub t: f64,
    pub load: f64,
    pub dt: f64,
    /// Total nodal unknowns (displacements and slips).
    pub d: &'a [f64],
    pub state: &'a FieldState,
    pub newton_iters: usize,
    /// Most negative pointwise dissipation increment of the step.
    pub diss_min: f64,
    /// Volume-integrated bulk dissipation increment.
    pub diss_bulk_inc: f64,
    /// Boundary-integrated interface dissipation increment.
    pub diss_gb_inc: f64,
}

#[derive(Debug, Clone, Default)]
pub struct MarchStats {
    pub steps: usize,
    pub cutbacks: usize,
    pub newton_iters_total: usize,
    /// Most negative pointwise dissipation increment over the whole run.
    pub diss_min: f64,
    pub diss_bulk_total: f64,
    pub diss_gb_total: f64,
}

struct StepOut {
    d_inc: Vec<f64>,
    trial: FieldState,
    iters: usize,
    /// Initial residual norm; feeds the phase-wide tolerance reference.
    r0: f64,
    diss_min: f64,
    diss_bulk: f64,
    diss_gb: f64,
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// One implicit step to `t + dt`. `Ok(None)` means the Newton loop did not
/// converge (or tripped a transient nonphysical state) and the caller
/// should retry with a smaller step.
///
/// `predictor` seeds the free dofs with an extrapolated increment;
/// prescribed dofs always carry their exact driven values. `r_ref` is the
/// largest initial residual committed so far in the phase, so the
/// convergence tolerance does not tighten just because a good predictor
/// made this step start close.
///
/// The LU handed in may hold a factorization from an earlier iterate.
/// Corrections reuse it as long as each one contracts the residual by at
/// least half; otherwise the current tangent is factorized. Elastic
/// stretches therefore never refactorize and the full cost is paid only
/// where the constitutive response actually turns.
#[allow(clippy::too_many_arguments)]
fn step(
    model: &Model,
    map: &DofMap,
    set: &ConstraintSet,
    lu: &mut SparseLu,
    committed: &FieldState,
    d: &[f64],
    dload: f64,
    dt: f64,
    r_ref: f64,
    predictor: Option<&[f64]>,
    cfg: &SolverConfig,
) -> Result<Option<StepOut>> {
    let prescribed = map.prescribed_increment(set, dload);
    let mut d_inc = prescribed.clone();
    if let Some(p) = predictor {
        debug_assert_eq!(p.len(), d_inc.len());
        for (i, v) in d_inc.iter_mut().enumerate() {
            if matches!(map.class[i], DofClass::Free(_)) {
                *v = p[i];
            }
        }
        // followers mirror their (possibly extrapolated) leaders, keeping
        // whatever driven offset the tie carries
        for t in &set.ties {
            d_inc[t.follower] =
                d_inc[t.leader] + (prescribed[t.follower] - prescribed[t.leader]);
        }
    }
    let mut r0 = 0.0;
    let mut rprev = f64::INFINITY;
    let mut k_stale = lu.is_factorized();
    // applied part of the last correction, for backtracking; halved in
    // place so repeated backtracks keep shrinking the same step
    let mut last_corr: Option<Vec<f64>> = None;
    let mut last_was_stale = false;
    let mut force_fresh = false;
    let mut backtracks = 0usize;
    const MAX_BACKTRACKS: usize = 6;
    let mut it = 0;
    while it <= cfg.max_iterations {
        // undamped Newton oscillates when quadrature points flip between
        // branches of the piecewise rate law, and a long correction can
        // overshoot into states the constitutive update rejects outright;
        // both are handled by halving the last correction
        let mut backtrack = |d_inc: &mut Vec<f64>, last_corr: &mut Option<Vec<f64>>| -> bool {
            match last_corr {
                Some(lc) if backtracks < MAX_BACKTRACKS => {
                    for (di, c) in d_inc.iter_mut().zip(lc.iter_mut()) {
                        *c *= 0.5;
                        *di -= *c;
                    }
                    backtracks += 1;
                    true
                }
                _ => false,
            }
        };
        let sys = match assemble(&model.mesh, &model.bulk, &model.gb, committed, d, &d_inc, dt) {
            Ok(s) => s,
            Err(Error::Nonphysical(_)) => {
                if backtrack(&mut d_inc, &mut last_corr) {
                    it += 1;
                    continue;
                }
                return Ok(None);
            }
            Err(e) => return Err(e),
        };
        let r = map.reduce_residual(&sys.residual);
        let rnorm = l2(&r);
        if !rnorm.is_finite() || (last_corr.is_some() && rnorm >= rprev) {
            if backtrack(&mut d_inc, &mut last_corr) {
                it += 1;
                continue;
            }
            if !rnorm.is_finite() {
                return Ok(None);
            }
            if last_was_stale {
                // a stale-tangent correction that cannot make progress even
                // fully damped: undo what is left of it and restart against
                // the true tangent
                if let Some(lc) = last_corr.take() {
                    for (di, c) in d_inc.iter_mut().zip(&lc) {
                        *di -= c;
                    }
                }
                force_fresh = true;
                last_was_stale = false;
                backtracks = 0;
                it += 1;
                continue;
            }
            // fresh tangent, fully damped, still no descent: fall through
            // and let the iteration cap or the divergence guard decide
        }
        if it == 0 {
            r0 = rnorm;
        }
        let tol = (cfg.newton_tol_rel * r0.max(r_ref)).max(cfg.newton_tol_abs);
        if rnorm <= tol {
            return Ok(Some(StepOut {
                d_inc,
                trial: sys.trial,
                iters: it,
                r0,
                diss_min: sys.diss_min,
                diss_bulk: sys.diss_bulk,
                diss_gb: sys.diss_gb,
            }));
        }
        if it == cfg.max_iterations || (it >= 4 && rnorm > 1e4 * r0.max(r_ref)) {
            return Ok(None);
        }
        if force_fresh || !lu.is_factorized() || (k_stale && rnorm > 0.5 * rprev) {
            if lu.factorize(map.n_free, &map.reduce_triplets(&sys.triplets)).is_err() {
                return Ok(None);
            }
            k_stale = false;
            force_fresh = false;
        }
        let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
        let delta = match lu.solve(&rhs) {
            Ok(x) => x,
            Err(Error::Solver(_)) if k_stale => {
                // the stale factorization went numerically bad; retry this
                // same residual against the current tangent
                if lu.factorize(map.n_free, &map.reduce_triplets(&sys.triplets)).is_err() {
                    return Ok(None);
                }
                k_stale = false;
                match lu.solve(&rhs) {
                    Ok(x) => x,
                    Err(Error::Solver(_)) => return Ok(None),
                    Err(e) => return Err(e),
                }
            }
            Err(Error::Solver(_)) => return Ok(None),
            Err(e) => return Err(e),
        };
        let full = map.expand_correction(&delta);
        for (di, fi) in d_inc.iter_mut().zip(&full) {
            *di += fi;
        }
        last_corr = Some(full);
        last_was_stale = k_stale;
        k_stale = true;
        rprev = rnorm;
        backtracks = 0;
        it += 1;
    }
    Ok(None)
}

pub fn march(
    model: &Model,
    program: &LoadProgram,
    cfg: &SolverConfig,
    on_commit: &mut dyn FnMut(&Committed) -> Result<()>,
) -> Result<MarchStats> {
    model.mesh.validate()?;
    if program.phases.is_empty() {
        return Err(Error::Solver("empty load program".into()));
    }
    let mut prev_end = 0.0;
    for p in &program.phases {
        if p.t_end <= prev_end {
            return Err(Error::Solver("phase end times must increase".into()));
        }
        prev_end = p.t_end;
    }
    if !(cfg.dt > 0.0 && cfg.dt_min > 0.0 && cfg.dt_min <= cfg.dt) {
        return Err(Error::Solver("invalid step size configuration".into()));
    }

    let n = model.mesh.n_dofs();
    let mut d = vec![0.0; n];
    let mut state = FieldState::init(&model.mesh, &model.bulk);
    let mut t = 0.0;
    let mut load_prev = (program.load)(0.0);
    let mut stats = MarchStats { diss_min: f64::INFINITY, ..Default::default() };

    on_commit(&Committed {
        step: 0,
        t: 0.0,
        load: load_prev,
        dt: 0.0,
        d: &d,
        state: &state,
        newton_iters: 0,
        diss_min: 0.0,
        diss_bulk_inc: 0.0,
        diss_gb_inc: 0.0,
    })?;

    let mut phase_start = 0.0;
    for phase in &program.phases {
        let map = DofMap::build(n, &phase.constraints)?;
        let mut lu = SparseLu::new();
        let mut targets: Vec<f64> = program
            .vertices
            .iter()
            .copied()
            .filter(|&v| v > phase_start + 1e-12 && v < phase.t_end - 1e-12)
            .collect();
        targets.sort_by(f64::total_cmp);
        targets.dedup();
        targets.push(phase.t_end);

        let dt_cap = match phase.dt_max {
            Some(v) if !(v > 0.0) => {
                return Err(Error::Solver("phase dt_max must be positive".into()));
            }
            Some(v) => v.min(cfg.dt),
            None => cfg.dt,
        };
        let mut dt_cur = dt_cap;
        // last converged increment and its dt, used to extrapolate the next
        // step's starting point; meaningless across vertices (the load path
        // may turn there), so it resets whenever a target is reached
        let mut last_inc: Option<(Vec<f64>, f64)> = None;
        let mut r_ref = 0.0f64;
        for &target in &targets {
            let eps_t = 1e-9 * target.abs().max(1e-9);
            while t < target - eps_t {
                let remaining = target - t;
                let dt_try =
                    if remaining <= dt_cur * (1.0 + 1e-6) { remaining } else { dt_cur };
                let t_new = t + dt_try;
                let load_new = (program.load)(t_new);
                let predictor = last_inc.as_ref().map(|(inc, dt_last)| {
                    let s = dt_try / dt_last;
                    inc.iter().map(|v| v * s).collect::<Vec<f64>>()
                });
                match step(
                    model,
                    &map,
                    &phase.constraints,
                    &mut lu,
                    &state,
                    &d,
                    load_new - load_prev,
                    dt_try,
                    r_ref,
                    predictor.as_deref(),
                    cfg,
                )? {
                    Some(out) => {
                        for (di, inc) in d.iter_mut().zip(&out.d_inc) {
                            *di += inc;
                        }
                        state = out.trial;
                        t = if (target - t_new).abs() <= eps_t { target } else { t_new };
                        load_prev = load_new;
                        stats.steps += 1;
                        stats.newton_iters_total += out.iters;
                        stats.diss_min = stats.diss_min.min(out.diss_min);
                        stats.diss_bulk_total += out.diss_bulk;
                        stats.diss_gb_total += out.diss_gb;
                        r_ref = r_ref.max(out.r0);
                        on_commit(&Committed {
                            step: stats.steps,
                            t,
                            load: load_new,
                            dt: dt_try,
                            d: &d,
                            state: &state,
                            newton_iters: out.iters,
                            diss_min: out.diss_min,
                            diss_bulk_inc: out.diss_bulk,
                            diss_gb_inc: out.diss_gb,
                        })?;
                        last_inc = Some((out.d_inc, dt_try));
                        dt_cur = (dt_cur * 2.0).min(dt_cap);
                    }
                    None => {
                        stats.cutbacks += 1;
                        dt_cur *= 0.5;
                        // an extrapolated start may itself be what broke the
                        // step; fall back to the plain predictor first
                        last_inc = None;
                        if dt_cur < cfg.dt_min {
                            return Err(Error::Solver(format!(
                                "time step collapsed below {:e} at t = {t:.6e}",
                                cfg.dt_min
                            )));
                        }
                    }
                }
            }
            t = target;
            last_inc = None;
        }
        phase_start = phase.t_end;
    }
    if stats.diss_min == f64::INFINITY {
        stats.diss_min = 0.0;
    }
    Ok(stats)
}
