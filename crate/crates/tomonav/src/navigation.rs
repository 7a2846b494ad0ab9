//! From per-frame action vectors to velocity commands: thresholding
//! into discrete actions, junction-passage counting with hysteresis
//! debouncing, and pre-programmed turns injected when the count
//! reaches a planned junction.
//!
//! Sign conventions: world coordinates are x east / y north with
//! heading measured counter-clockwise from +x, so a left turn is a
//! positive yaw rate.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::ActionVector;

/// Hard cap on commanded forward speed, meters per second.
pub const MAX_FORWARD_SPEED: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Forward,
    YawLeft,
    YawRight,
    Halt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscreteCommand {
    pub action: Action,
    pub junction_detected: bool,
}

/// Binarize the five heads at threshold `tau`.
///
/// Decision order: halt wins when above threshold and not dominated by
/// another command head; otherwise a yaw head above threshold wins
/// (the larger of the two, exact ties going left, matching the
/// "turn while moving" reading of a combined forward+yaw band);
/// otherwise the command is forward.
pub fn threshold_actions(av: &ActionVector, tau: f64) -> Result<DiscreteCommand> {
    let a = av.as_array();
    if a.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidInput("action vector contains NaN".into()));
    }
    let junction_detected = av.junction >= tau;
    let command_max = av.forward.max(av.yaw_left).max(av.yaw_right).max(av.halt);
    let action = if av.halt >= tau && av.halt >= command_max {
        Action::Halt
    } else if av.yaw_left >= tau || av.yaw_right >= tau {
        if av.yaw_left >= tau && (av.yaw_left >= av.yaw_right || av.yaw_right < tau) {
            Action::YawLeft
        } else {
            Action::YawRight
        }
    } else {
        Action::Forward
    };
    Ok(DiscreteCommand { action, junction_detected })
}

/// Rising-edge junction counter with hysteresis: `m_rise` consecutive
/// positive flags register one junction and disarm; `n_rearm`
/// consecutive negatives re-arm. A plateau of detections therefore
/// counts exactly once.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct JunctionCounter {
    pub count: u32,
    pub armed: bool,
    pub consecutive_pos: u32,
    pub consecutive_neg: u32,
    pub m_rise: u32,
    pub n_rearm: u32,
}

impl JunctionCounter {
    pub fn new(m_rise: u32, n_rearm: u32) -> Self {
        Self { count: 0, armed: true, consecutive_pos: 0, consecutive_neg: 0, m_rise, n_rearm }
    }
}

impl Default for JunctionCounter {
    fn default() -> Self {
        Self::new(3, 5)
    }
}

/// One counter step; returns the updated counter and whether this call
/// registered a new junction.
pub fn junction_update(mut jc: JunctionCounter, flag: bool) -> (JunctionCounter, bool) {
    if jc.armed {
        if flag {
            jc.consecutive_pos += 1;
            if jc.consecutive_pos >= jc.m_rise {
                jc.count += 1;
                jc.armed = false;
                jc.consecutive_pos = 0;
                jc.consecutive_neg = 0;
                return (jc, true);
            }
        } else {
            jc.consecutive_pos = 0;
        }
    } else if flag {
        jc.consecutive_neg = 0;
    } else {
        jc.consecutive_neg += 1;
        if jc.consecutive_neg >= jc.n_rearm {
            jc.armed = true;
            jc.consecutive_pos = 0;
            jc.consecutive_neg = 0;
        }
    }
    (jc, false)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Turn {
    Left,
    Right,
    Straight,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Directive {
    /// 1-based ordinal of the registered junction this turn fires at.
    pub junction: u32,
    pub turn: Turn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalAction {
    Halt,
}

/// User-programmed route: turns keyed by junction ordinal plus what to
/// do when the plan is exhausted. The terminal action fires at the
/// first registered junction beyond the last directive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoutePlan {
    pub directives: Vec<Directive>,
    pub terminal: TerminalAction,
}

impl RoutePlan {
    pub fn validate(&self) -> Result<()> {
        let mut prev = 0u32;
        for d in &self.directives {
            if d.junction == 0 {
                return Err(Error::InvalidRoute("junction indices are 1-based".into()));
            }
            if d.junction <= prev {
                return Err(Error::InvalidRoute(format!(
                    "junction indices must be strictly increasing ({} after {prev})",
                    d.junction
                )));
            }
            prev = d.junction;
        }
        Ok(())
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let plan: RoutePlan = serde_json::from_str(json)?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("route plan serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocityCommand {
    /// m/s, in [0, 6].
    pub forward_speed: f64,
    /// rad/s, positive = left (counter-clockwise).
    pub yaw_rate: f64,
    pub hover: bool,
}

impl VelocityCommand {
    pub fn hover() -> Self {
        Self { forward_speed: 0.0, yaw_rate: 0.0, hover: true }
    }

    pub fn validate(&self, max_yaw: f64) -> Result<()> {
        if self.hover && (self.forward_speed != 0.0 || self.yaw_rate != 0.0) {
            return Err(Error::InvalidInput("hover implies zero speeds".into()));
        }
        if !(0.0..=MAX_FORWARD_SPEED).contains(&self.forward_speed) {
            return Err(Error::InvalidInput(format!(
                "forward speed {} outside [0, {MAX_FORWARD_SPEED}]",
                self.forward_speed
            )));
        }
        if self.yaw_rate.abs() > max_yaw + 1e-12 {
            return Err(Error::InvalidInput(format!("yaw rate {} exceeds {max_yaw}", self.yaw_rate)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NavConfig {
    pub threshold: f64,
    pub m_rise: u32,
    pub n_rearm: u32,
    /// Frames a pre-programmed turn overrides the model.
    pub override_frames: u32,
    pub v_forward: f64,
    pub v_turn: f64,
    pub yaw_rate_max: f64,
}

impl Default for NavConfig {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            m_rise: 3,
            n_rearm: 5,
            override_frames: 15,
            v_forward: 2.0,
            v_turn: 1.0,
            yaw_rate_max: 1.57,
        }
    }
}

impl NavConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::InvalidInput("threshold must be in [0, 1]".into()));
        }
        if self.m_rise == 0 || self.n_rearm == 0 {
            return Err(Error::InvalidInput("hysteresis thresholds must be >= 1".into()));
        }
        for v in [self.v_forward, self.v_turn] {
            if !(0.0..=MAX_FORWARD_SPEED).contains(&v) {
                return Err(Error::InvalidInput(format!(
                    "speed {v} outside [0, {MAX_FORWARD_SPEED}] m/s"
                )));
            }
        }
        if self.yaw_rate_max <= 0.0 {
            return Err(Error::InvalidInput("yaw_rate_max must be positive".into()));
        }
        Ok(())
    }
}

/// Per-frame controller record for offline analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub frame: u64,
    pub action: Action,
    pub junction_flag: bool,
    pub count: u32,
    pub newly_registered: bool,
    pub override_active: bool,
    pub terminal_hover: bool,
    pub forward_speed: f64,
    pub yaw_rate: f64,
    pub hover: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct NavTrace {
    pub records: Vec<TraceRecord>,
}

impl NavTrace {
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Stateful per-frame controller: thresholds the model output, counts
/// junctions, and injects the planned turn for `override_frames`
/// frames whenever the count reaches an unconsumed directive. Model
/// commands are suspended during an override window.
#[derive(Debug, Clone)]
pub struct Controller {
    cfg: NavConfig,
    route: RoutePlan,
    counter: JunctionCounter,
    next_directive: usize,
    override_remaining: u32,
    override_turn: Turn,
    terminal_hover: bool,
    frame: u64,
    executed: Vec<Directive>,
}

impl Controller {
    pub fn new(route: RoutePlan, cfg: NavConfig) -> Result<Self> {
        cfg.validate()?;
        route.validate()?;
        let counter = JunctionCounter::new(cfg.m_rise, cfg.n_rearm);
        Ok(Self {
            cfg,
            route,
            counter,
            next_directive: 0,
            override_remaining: 0,
            override_turn: Turn::Straight,
            terminal_hover: false,
            frame: 0,
            executed: Vec::new(),
        })
    }

    pub fn junction_count(&self) -> u32 {
        self.counter.count
    }

    /// Directives consumed so far, in execution order.
    pub fn executed_directives(&self) -> &[Directive] {
        &self.executed
    }

    pub fn terminal_reached(&self) -> bool {
        self.terminal_hover
    }

    pub fn route_complete(&self) -> bool {
        self.next_directive == self.route.directives.len()
    }

    fn turn_velocity(&self, turn: Turn) -> VelocityCommand {
        match turn {
            Turn::Left => VelocityCommand {
                forward_speed: self.cfg.v_turn,
                yaw_rate: self.cfg.yaw_rate_max,
                hover: false,
            },
            Turn::Right => VelocityCommand {
                forward_speed: self.cfg.v_turn,
                yaw_rate: -self.cfg.yaw_rate_max,
                hover: false,
            },
            Turn::Straight => VelocityCommand {
                forward_speed: self.cfg.v_forward,
                yaw_rate: 0.0,
                hover: false,
            },
        }
    }

    pub fn step(&mut self, av: &ActionVector) -> Result<(VelocityCommand, TraceRecord)> {
        let cmd = threshold_actions(av, self.cfg.threshold)?;
        let (counter, newly) = junction_update(self.counter, cmd.junction_detected);
        self.counter = counter;

        if newly {
            match self.route.directives.get(self.next_directive) {
                Some(d) if d.junction == self.counter.count => {
                    self.override_turn = d.turn;
                    self.override_remaining = self.cfg.override_frames;
                    self.next_directive += 1;
                    self.executed.push(*d);
                }
                Some(_) => {}
                None => {
                    // Beyond the plan: the terminal action takes over.
                    self.terminal_hover = true;
                }
            }
        }

        let override_active = self.override_remaining > 0 && !self.terminal_hover;
        let velocity = if self.terminal_hover {
            VelocityCommand::hover()
        } else if self.override_remaining > 0 {
            self.override_remaining -= 1;
            self.turn_velocity(self.override_turn)
        } else {
            match cmd.action {
                Action::Forward => VelocityCommand {
                    forward_speed: self.cfg.v_forward,
                    yaw_rate: 0.0,
                    hover: false,
                },
                Action::YawLeft => self.turn_velocity(Turn::Left),
                Action::YawRight => self.turn_velocity(Turn::Right),
                Action::Halt => VelocityCommand::hover(),
            }
        };
        velocity.validate(self.cfg.yaw_rate_max)?;

        let record = TraceRecord {
            frame: self.frame,
            action: cmd.action,
            junction_flag: cmd.junction_detected,
            count: self.counter.count,
            newly_registered: newly,
            override_active,
            terminal_hover: self.terminal_hover,
            forward_speed: velocity.forward_speed,
            yaw_rate: velocity.yaw_rate,
            hover: velocity.hover,
        };
        self.frame += 1;
        Ok((velocity, record))
    }
}

/// Fold a finite action-vector stream through the controller.
pub fn run_controller(
    stream: &[ActionVector],
    route: &RoutePlan,
    cfg: &NavConfig,
) -> Result<(Vec<VelocityCommand>, NavTrace)> {
    let mut controller = Controller::new(route.clone(), cfg.clone())?;
    let mut velocities = Vec::with_capacity(stream.len());
    let mut trace = NavTrace::default();
    for av in stream {
        let (v, r) = controller.step(av)?;
        velocities.push(v);
        trace.records.push(r);
    }
    Ok((velocities, trace))
}
