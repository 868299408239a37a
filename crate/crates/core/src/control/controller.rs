//! Runtime-selectable feedback laws.

use std::collections::BTreeMap;

use nalgebra::{Vector3, Vector6};

use super::{lqr_step, mpc_step, solve_dare, ControlCommand, DiscreteModel, RiccatiSolution, Weights};
use crate::error::{Error, Result};
use crate::numerics::Mat;

/// Everything a controller sees at one control instant.
#[derive(Debug, Clone, Copy)]
pub struct ControlContext<'a> {
    pub t: f64,
    /// State deviation from the LVLH-aligned equilibrium.
    pub x_dev: &'a Vector6<f64>,
    /// Measured body-frame field (T).
    pub b_body: &'a Vector3<f64>,
    /// ZOH model frozen at this instant's field.
    pub model: &'a DiscreteModel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerSettings {
    pub weights: Weights,
    /// Per-axis dipole limit (A m^2).
    pub u_max: f64,
    pub horizon: usize,
}

/// Per-step Riccati bookkeeping exposed for diagnostics.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SolverStats {
    pub dare_iterations: usize,
    pub qp_iterations: usize,
}

/// A feedback law evaluated once per control period. Instances carry
/// solver warm-start state and belong to a single scenario.
pub trait Controller: Send {
    fn name(&self) -> &'static str;
    /// Whether the law needs the ZOH model at every step.
    fn needs_model(&self) -> bool {
        true
    }
    fn command(&mut self, ctx: &ControlContext<'_>) -> Result<ControlCommand>;
    fn last_stats(&self) -> SolverStats {
        SolverStats::default()
    }
}

/// Open loop: zero dipole.
#[derive(Debug, Default)]
pub struct NoController;

impl Controller for NoController {
    fn name(&self) -> &'static str {
        "none"
    }

    fn needs_model(&self) -> bool {
        false
    }

    fn command(&mut self, _ctx: &ControlContext<'_>) -> Result<ControlCommand> {
        Ok(ControlCommand::zero())
    }
}

/// Warm-started frozen-field Riccati solve shared by LQR and MPC.
#[derive(Debug, Default)]
struct RiccatiTracker {
    warm: Option<Mat>,
    last_iterations: usize,
}

impl RiccatiTracker {
    fn solve(&mut self, model: &DiscreteModel, w: &Weights) -> Result<RiccatiSolution> {
        let sol = solve_dare(&model.ad, &model.bd, w, self.warm.as_ref())?;
        self.last_iterations = sol.iterations;
        self.warm = Some(sol.sign.clone());
        Ok(sol)
    }
}

/// Time-varying LQR with post-hoc dipole rescaling.
#[derive(Debug)]
pub struct LqrController {
    settings: ControllerSettings,
    riccati: RiccatiTracker,
}

impl LqrController {
    pub fn new(settings: ControllerSettings) -> Self {
        Self { settings, riccati: RiccatiTracker::default() }
    }
}

impl Controller for LqrController {
    fn name(&self) -> &'static str {
        "lqr"
    }

    fn command(&mut self, ctx: &ControlContext<'_>) -> Result<ControlCommand> {
        let sol = self.riccati.solve(ctx.model, &self.settings.weights)?;
        let u = lqr_step(ctx.x_dev, &sol.k);
        ControlCommand::from_u(u, ctx.b_body, self.settings.u_max)
    }

    fn last_stats(&self) -> SolverStats {
        SolverStats { dare_iterations: self.riccati.last_iterations, qp_iterations: 0 }
    }
}

/// Receding-horizon control with the frozen-field Riccati solution as
/// terminal weight. The input box is the torque a dipole of strength
/// `u_max` can produce in the current field, |u_i| <= u_max |b|; the
/// resulting dipole is still passed through the saturation rescaling.
#[derive(Debug)]
pub struct MpcController {
    settings: ControllerSettings,
    riccati: RiccatiTracker,
    last_qp: usize,
}

impl MpcController {
    pub fn new(settings: ControllerSettings) -> Self {
        Self { settings, riccati: RiccatiTracker::default(), last_qp: 0 }
    }
}

impl Controller for MpcController {
    fn name(&self) -> &'static str {
        "mpc"
    }

    fn command(&mut self, ctx: &ControlContext<'_>) -> Result<ControlCommand> {
        let sol = self.riccati.solve(ctx.model, &self.settings.weights)?;
        let bound = self.settings.u_max * ctx.b_body.norm();
        let out = mpc_step(ctx.x_dev, ctx.model, &self.settings.weights, &sol.p, self.settings.horizon, bound)?;
        self.last_qp = out.iterations;
        ControlCommand::from_u(out.u0, ctx.b_body, self.settings.u_max)
    }

    fn last_stats(&self) -> SolverStats {
        SolverStats { dare_iterations: self.riccati.last_iterations, qp_iterations: self.last_qp }
    }
}

type ControllerCtor = fn(&ControllerSettings) -> Box<dyn Controller>;

/// Controllers selectable by name.
pub struct ControllerRegistry {
    ctors: BTreeMap<&'static str, ControllerCtor>,
}

impl Default for ControllerRegistry {
    fn default() -> Self {
        let mut reg = Self { ctors: BTreeMap::new() };
        reg.register("none", |_| Box::new(NoController));
        reg.register("lqr", |s| Box::new(LqrController::new(*s)));
        reg.register("mpc", |s| Box::new(MpcController::new(*s)));
        reg
    }
}

impl ControllerRegistry {
    pub fn register(&mut self, name: &'static str, ctor: ControllerCtor) {
        self.ctors.insert(name, ctor);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.ctors.keys().copied().collect()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.ctors.contains_key(name)
    }

    pub fn build(&self, name: &str, settings: &ControllerSettings) -> Result<Box<dyn Controller>> {
        let ctor = self.ctors.get(name).ok_or_else(|| {
            Error::Validation(format!("unknown controller '{name}' (known: {:?})", self.names()))
        })?;
        Ok(ctor(settings))
    }
}
