//! Grid warehouse with mobile robots that carry inventory pods to
//! workstations. Tasks are handed out by auction; each step the controller
//! picks a joint action, an action DBN is built for it, the ground truth is
//! sampled from that DBN and the belief is filtered with PSBF or BK.
//!
//! State layout: robot `r` owns variables `3r` (cell), `3r + 1` (heading) and
//! `3r + 2` (carried pod, `0` = none, `p + 1` = pod `p`); pod `p` owns
//! variable `3R + p` (location: `0` home, `1 + k` workstation `k`,
//! `1 + W + r` on robot `r`).

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::time::Duration;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::belief::{argmax, FactorLayout, FactoredBelief};
use crate::clustering::Clustering;
use crate::dbn::{ActionDbn, DbnBuilder, Node, VarSpec};
use crate::error::{Error, Result};
use crate::exec::{Clock, Executor};
use crate::filter::{bk_step, psbf_step, FilterConfig, StepContext};
use crate::passivity::{detect_all, PassivityReport};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }

    pub fn manhattan(self, other: Cell) -> usize {
        self.row.abs_diff(other.row) + self.col.abs_diff(other.col)
    }
}

/// Headings in clockwise order; a right turn adds one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Heading {
    North,
    East,
    South,
    West,
}

impl Heading {
    pub const ALL: [Heading; 4] = [Heading::North, Heading::East, Heading::South, Heading::West];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Self {
        Self::ALL[i % 4]
    }

    pub fn right(self) -> Self {
        Self::from_index(self.index() + 1)
    }

    pub fn left(self) -> Self {
        Self::from_index(self.index() + 3)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ControlMode {
    /// One planner with the shared belief; moves are reserved so robots
    /// never plan into the same cell.
    Centralised,
    /// Each robot plans for itself; other robots are known only through
    /// their last position readings and nothing is reserved.
    Decentralised,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WarehouseConfig {
    pub width: usize,
    pub height: usize,
    pub workstations: Vec<Cell>,
    /// Home cell of each pod.
    pub pods: Vec<Cell>,
    pub robots: Vec<(Cell, Heading)>,
    pub p_move: f64,
    pub p_turn: f64,
    pub p_load: f64,
    /// Probability that each sensor reads the true value.
    pub sensor_pos: f64,
    pub sensor_heading: f64,
    pub sensor_carried: f64,
    pub mode: ControlMode,
    pub task_seed: u64,
}

impl WarehouseConfig {
    /// 8×6 grid, two workstations on the left edge, a 4×4 block of pods and
    /// four robots parked on the top and bottom rows.
    pub fn kiva16() -> Self {
        let pods = (1..5).flat_map(|row| (3..7).map(move |col| Cell::new(row, col))).collect();
        Self {
            width: 8,
            height: 6,
            workstations: vec![Cell::new(1, 0), Cell::new(4, 0)],
            pods,
            robots: vec![
                (Cell::new(0, 2), Heading::East),
                (Cell::new(0, 6), Heading::West),
                (Cell::new(5, 2), Heading::East),
                (Cell::new(5, 6), Heading::West),
            ],
            p_move: 0.95,
            p_turn: 0.95,
            p_load: 0.9,
            sensor_pos: 0.9,
            sensor_heading: 0.9,
            sensor_carried: 0.9,
            mode: ControlMode::Centralised,
            task_seed: 0,
        }
    }

    /// All actions succeed and all sensors are exact.
    pub fn noiseless(mut self) -> Self {
        self.p_move = 1.0;
        self.p_turn = 1.0;
        self.p_load = 1.0;
        self.sensor_pos = 1.0;
        self.sensor_heading = 1.0;
        self.sensor_carried = 1.0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.width == 0 || self.height == 0 {
            return bad("grid must be nonempty".into());
        }
        if self.robots.is_empty() || self.workstations.is_empty() {
            return bad("at least one robot and one workstation are required".into());
        }
        let cells = self
            .workstations
            .iter()
            .chain(&self.pods)
            .chain(self.robots.iter().map(|(c, _)| c));
        for c in cells {
            if c.row >= self.height || c.col >= self.width {
                return bad(format!("cell ({}, {}) lies outside the grid", c.row, c.col));
            }
        }
        fn distinct(cells: impl IntoIterator<Item = Cell>) -> bool {
            let mut seen = BTreeSet::new();
            cells.into_iter().all(|c| seen.insert(c))
        }
        if !distinct(self.workstations.iter().chain(&self.pods).copied()) {
            return bad("workstations and pods must occupy distinct cells".into());
        }
        if !distinct(self.robots.iter().map(|(c, _)| *c)) {
            return bad("robots must start on distinct cells".into());
        }
        for p in [
            self.p_move,
            self.p_turn,
            self.p_load,
            self.sensor_pos,
            self.sensor_heading,
            self.sensor_carried,
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("probability {p} out of range"));
            }
        }
        Ok(())
    }

    pub fn num_cells(&self) -> usize {
        self.width * self.height
    }

    pub fn num_robots(&self) -> usize {
        self.robots.len()
    }

    pub fn num_pods(&self) -> usize {
        self.pods.len()
    }

    pub fn num_state_vars(&self) -> usize {
        3 * self.num_robots() + self.num_pods()
    }

    pub fn cell_id(&self, c: Cell) -> usize {
        c.row * self.width + c.col
    }

    pub fn cell(&self, id: usize) -> Cell {
        Cell::new(id / self.width, id % self.width)
    }

    pub fn neighbor(&self, c: Cell, h: Heading) -> Option<Cell> {
        match h {
            Heading::North if c.row > 0 => Some(Cell::new(c.row - 1, c.col)),
            Heading::South if c.row + 1 < self.height => Some(Cell::new(c.row + 1, c.col)),
            Heading::West if c.col > 0 => Some(Cell::new(c.row, c.col - 1)),
            Heading::East if c.col + 1 < self.width => Some(Cell::new(c.row, c.col + 1)),
            _ => None,
        }
    }

    fn neighbors(&self, c: Cell) -> Vec<Cell> {
        Heading::ALL.iter().filter_map(|&h| self.neighbor(c, h)).collect()
    }

    pub fn pos_var(&self, r: usize) -> usize {
        3 * r
    }

    pub fn heading_var(&self, r: usize) -> usize {
        3 * r + 1
    }

    pub fn carried_var(&self, r: usize) -> usize {
        3 * r + 2
    }

    pub fn pod_var(&self, p: usize) -> usize {
        3 * self.num_robots() + p
    }

    fn loc_domain(&self) -> usize {
        1 + self.workstations.len() + self.num_robots()
    }

    /// Location value of a pod sitting at `dest`.
    pub fn loc_value(&self, dest: Dest) -> usize {
        match dest {
            Dest::Home => 0,
            Dest::Workstation(k) => 1 + k,
        }
    }

    pub fn loc_on_robot(&self, r: usize) -> usize {
        1 + self.workstations.len() + r
    }

    /// Cell of a pod location value, or `None` when it is on a robot.
    pub fn loc_cell(&self, pod: usize, loc: usize) -> Option<Cell> {
        match loc {
            0 => Some(self.pods[pod]),
            l if l <= self.workstations.len() => Some(self.workstations[l - 1]),
            _ => None,
        }
    }

    pub fn dest_cell(&self, pod: usize, dest: Dest) -> Cell {
        match dest {
            Dest::Home => self.pods[pod],
            Dest::Workstation(k) => self.workstations[k],
        }
    }

    pub fn state_vars(&self) -> Vec<VarSpec> {
        let mut vars = Vec::with_capacity(self.num_state_vars());
        for r in 0..self.num_robots() {
            vars.push(VarSpec::new(format!("r{}.pos", r + 1), self.num_cells()));
            vars.push(VarSpec::new(format!("r{}.heading", r + 1), 4));
            vars.push(VarSpec::new(format!("r{}.carried", r + 1), 1 + self.num_pods()));
        }
        for p in 0..self.num_pods() {
            vars.push(VarSpec::new(format!("i{}.loc", p + 1), self.loc_domain()));
        }
        vars
    }

    pub fn obs_vars(&self) -> Vec<VarSpec> {
        let mut vars = Vec::with_capacity(3 * self.num_robots());
        for r in 0..self.num_robots() {
            vars.push(VarSpec::new(format!("r{}.pos_obs", r + 1), self.num_cells()));
            vars.push(VarSpec::new(format!("r{}.heading_obs", r + 1), 4));
            vars.push(VarSpec::new(format!("r{}.carried_obs", r + 1), 1 + self.num_pods()));
        }
        vars
    }

    /// One pose cluster per robot, one singleton per pod.
    pub fn clustering(&self) -> Clustering {
        let mut clusters: Vec<Vec<usize>> = (0..self.num_robots())
            .map(|r| vec![self.pos_var(r), self.heading_var(r), self.carried_var(r)])
            .collect();
        clusters.extend((0..self.num_pods()).map(|p| vec![self.pod_var(p)]));
        Clustering::new(self.num_state_vars(), clusters).expect("robot and pod clusters partition the state")
    }

    pub fn initial_state(&self) -> WarehouseState {
        WarehouseState {
            robots: self
                .robots
                .iter()
                .map(|&(cell, heading)| RobotState {
                    cell,
                    heading,
                    carried: None,
                })
                .collect(),
            pods: vec![0; self.num_pods()],
        }
    }

    /// Every pod appears in exactly one task, in a seeded order, with a
    /// seeded destination.
    pub fn tasks(&self) -> Vec<Task> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.task_seed);
        let mut pods: Vec<usize> = (0..self.num_pods()).collect();
        pods.shuffle(&mut rng);
        pods.into_iter()
            .map(|pod| Task {
                pod,
                workstation: rng.random_range(0..self.workstations.len()),
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RobotState {
    pub cell: Cell,
    pub heading: Heading,
    pub carried: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WarehouseState {
    pub robots: Vec<RobotState>,
    /// Location value of each pod.
    pub pods: Vec<usize>,
}

impl WarehouseState {
    pub fn encode(&self, config: &WarehouseConfig) -> Vec<usize> {
        let mut s = Vec::with_capacity(config.num_state_vars());
        for r in &self.robots {
            s.push(config.cell_id(r.cell));
            s.push(r.heading.index());
            s.push(r.carried.map_or(0, |p| p + 1));
        }
        s.extend_from_slice(&self.pods);
        s
    }

    pub fn decode(config: &WarehouseConfig, s: &[usize]) -> Self {
        let robots = (0..config.num_robots())
            .map(|r| RobotState {
                cell: config.cell(s[config.pos_var(r)]),
                heading: Heading::from_index(s[config.heading_var(r)]),
                carried: s[config.carried_var(r)].checked_sub(1),
            })
            .collect();
        Self {
            robots,
            pods: s[3 * config.num_robots()..].to_vec(),
        }
    }
}

/// Where an unloaded pod is put down.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Dest {
    Home,
    Workstation(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum RobotAction {
    Forward,
    TurnLeft,
    TurnRight,
    Load(usize),
    Unload(usize, Dest),
    Noop,
}

impl fmt::Display for RobotAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            RobotAction::Forward => f.write_str("fwd"),
            RobotAction::TurnLeft => f.write_str("left"),
            RobotAction::TurnRight => f.write_str("right"),
            RobotAction::Load(p) => write!(f, "load:i{}", p + 1),
            RobotAction::Unload(p, Dest::Home) => write!(f, "unload:i{}>home", p + 1),
            RobotAction::Unload(p, Dest::Workstation(k)) => write!(f, "unload:i{}>w{}", p + 1, k + 1),
            RobotAction::Noop => f.write_str("noop"),
        }
    }
}

pub type JointAction = Vec<RobotAction>;

pub fn format_joint_action(joint: &[RobotAction]) -> String {
    let parts: Vec<String> = joint.iter().map(|a| format!("{a}")).collect();
    parts.join("|")
}

fn det(b: bool) -> f64 {
    f64::from(u8::from(b))
}

/// Mass `correct` on the true value, the rest spread evenly over `others`.
fn noisy(v: usize, truth: usize, others: usize, correct: f64) -> f64 {
    if others == 0 {
        det(v == truth)
    } else if v == truth {
        correct
    } else {
        (1.0 - correct) / others as f64
    }
}

fn check_joint_action(config: &WarehouseConfig, joint: &[RobotAction]) -> Result<()> {
    if joint.len() != config.num_robots() {
        return Err(Error::InvalidParameter(format!(
            "joint action has {} entries for {} robots",
            joint.len(),
            config.num_robots()
        )));
    }
    let mut pods = BTreeSet::new();
    for a in joint {
        let pod = match *a {
            RobotAction::Load(p) => p,
            RobotAction::Unload(p, dest) => {
                if let Dest::Workstation(k) = dest {
                    if k >= config.workstations.len() {
                        return Err(Error::InvalidParameter(format!("no workstation w{}", k + 1)));
                    }
                }
                p
            }
            _ => continue,
        };
        if pod >= config.num_pods() {
            return Err(Error::InvalidParameter(format!("no pod i{}", pod + 1)));
        }
        if !pods.insert(pod) {
            return Err(Error::InvalidParameter(format!(
                "pod i{} is handled by two robots in one step",
                pod + 1
            )));
        }
    }
    Ok(())
}

/// Builds the DBN of one joint action.
pub fn build_action_dbn(config: &WarehouseConfig, joint: &[RobotAction]) -> Result<ActionDbn> {
    config.validate()?;
    check_joint_action(config, joint)?;
    let name = format_joint_action(joint);
    let mut b = DbnBuilder::new(name, config.state_vars(), config.obs_vars());
    let mut handler: BTreeMap<usize, (usize, RobotAction)> = BTreeMap::new();

    for (r, &action) in joint.iter().enumerate() {
        let (pos, heading, carried) = (config.pos_var(r), config.heading_var(r), config.carried_var(r));

        b = match action {
            RobotAction::Forward => {
                let p_move = config.p_move;
                b.cpt_fn(Node::Next(pos), vec![Node::Now(pos), Node::Now(heading)], |pv, v| {
                    let here = config.cell(pv[0]);
                    match config.neighbor(here, Heading::from_index(pv[1])) {
                        Some(to) if config.cell_id(to) == v => p_move,
                        Some(_) if v == pv[0] => 1.0 - p_move,
                        Some(_) => 0.0,
                        None => det(v == pv[0]),
                    }
                })?
            }
            _ => b.identity(pos)?,
        };

        b = match action {
            RobotAction::TurnLeft | RobotAction::TurnRight => {
                let step = if action == RobotAction::TurnLeft { 3 } else { 1 };
                let p_turn = config.p_turn;
                b.cpt_fn(Node::Next(heading), vec![Node::Now(heading)], |pv, v| {
                    let turned = (pv[0] + step) % 4;
                    if turned == v {
                        p_turn
                    } else if v == pv[0] {
                        1.0 - p_turn
                    } else {
                        0.0
                    }
                })?
            }
            _ => b.identity(heading)?,
        };

        let p_load = config.p_load;
        b = match action {
            RobotAction::Load(p) => {
                handler.insert(p, (r, action));
                let parents = vec![Node::Now(carried), Node::Now(pos), Node::Now(config.pod_var(p))];
                b.cpt_fn(Node::Next(carried), parents, |pv, v| {
                    let here = config.cell(pv[1]);
                    if pv[0] == 0 && config.loc_cell(p, pv[2]) == Some(here) {
                        if v == p + 1 {
                            p_load
                        } else if v == 0 {
                            1.0 - p_load
                        } else {
                            0.0
                        }
                    } else {
                        det(v == pv[0])
                    }
                })?
            }
            RobotAction::Unload(p, dest) => {
                handler.insert(p, (r, action));
                let target = config.cell_id(config.dest_cell(p, dest));
                b.cpt_fn(Node::Next(carried), vec![Node::Now(carried), Node::Now(pos)], |pv, v| {
                    if pv[0] == p + 1 && pv[1] == target {
                        if v == 0 {
                            p_load
                        } else if v == pv[0] {
                            1.0 - p_load
                        } else {
                            0.0
                        }
                    } else {
                        det(v == pv[0])
                    }
                })?
            }
            _ => b.identity(carried)?,
        };
    }

    for p in 0..config.num_pods() {
        let loc = config.pod_var(p);
        b = match handler.get(&p) {
            None => b.identity(loc)?,
            Some(&(r, action)) => {
                let carried = config.carried_var(r);
                let on_robot = config.loc_on_robot(r);
                let dropped = match action {
                    RobotAction::Unload(_, dest) => Some(config.loc_value(dest)),
                    _ => None,
                };
                let parents = vec![Node::Now(loc), Node::Now(carried), Node::Next(carried)];
                b.cpt_fn(Node::Next(loc), parents, |pv, v| {
                    let (before, after) = (pv[1], pv[2]);
                    let moved_to = if before != after && after == p + 1 {
                        on_robot
                    } else if before == p + 1 && after == 0 {
                        dropped.unwrap_or(pv[0])
                    } else {
                        pv[0]
                    };
                    det(v == moved_to)
                })?
            }
        };
    }

    let pods = config.num_pods();
    for r in 0..config.num_robots() {
        let (pos, heading, carried) = (config.pos_var(r), config.heading_var(r), config.carried_var(r));
        let sensor = config.sensor_pos;
        b = b.cpt_fn(Node::Obs(3 * r), vec![Node::Next(pos)], |pv, v| {
            let here = config.cell(pv[0]);
            let around = config.neighbors(here);
            if v == pv[0] {
                if around.is_empty() {
                    1.0
                } else {
                    sensor
                }
            } else if around.contains(&config.cell(v)) {
                (1.0 - sensor) / around.len() as f64
            } else {
                0.0
            }
        })?;
        b = b.cpt_fn(Node::Obs(3 * r + 1), vec![Node::Next(heading)], |pv, v| {
            noisy(v, pv[0], 3, config.sensor_heading)
        })?;
        b = b.cpt_fn(Node::Obs(3 * r + 2), vec![Node::Next(carried)], |pv, v| {
            noisy(v, pv[0], pods, config.sensor_carried)
        })?;
    }
    b.build()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Task {
    pub pod: usize,
    pub workstation: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TaskStatus {
    Open,
    Assigned(usize),
    Done,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AuctionRecord {
    pub step: usize,
    pub task: usize,
    /// Bid of every robot that took part, as `(robot, cost)`.
    pub bids: Vec<(usize, f64)>,
    pub winner: usize,
}

/// Per-variable marginals the controller reads from a belief.
#[derive(Clone, Debug, PartialEq)]
pub struct BeliefView {
    pub marginals: Vec<Vec<f64>>,
}

impl BeliefView {
    pub fn from_factored(belief: &FactoredBelief) -> Self {
        Self {
            marginals: (0..belief.clustering().num_vars()).map(|i| belief.var_marginal(i)).collect(),
        }
    }

    /// A belief with all mass on `state`.
    pub fn exact(config: &WarehouseConfig, state: &WarehouseState) -> Self {
        let domains: Vec<usize> = config.state_vars().iter().map(|v| v.domain).collect();
        let s = state.encode(config);
        Self {
            marginals: domains
                .iter()
                .zip(&s)
                .map(|(&d, &v)| (0..d).map(|k| det(k == v)).collect())
                .collect(),
        }
    }

    fn likely(&self, var: usize) -> usize {
        argmax(&self.marginals[var])
    }

    pub fn robot_cell(&self, config: &WarehouseConfig, r: usize) -> Cell {
        config.cell(self.likely(config.pos_var(r)))
    }

    pub fn robot_heading(&self, config: &WarehouseConfig, r: usize) -> Heading {
        Heading::from_index(self.likely(config.heading_var(r)))
    }

    pub fn robot_carried(&self, config: &WarehouseConfig, r: usize) -> Option<usize> {
        self.likely(config.carried_var(r)).checked_sub(1)
    }

    pub fn pod_loc(&self, config: &WarehouseConfig, p: usize) -> usize {
        self.likely(config.pod_var(p))
    }

    /// Expected (row, column) of a robot.
    pub fn mean_position(&self, config: &WarehouseConfig, r: usize) -> (f64, f64) {
        let mut row = 0.0;
        let mut col = 0.0;
        for (id, &w) in self.marginals[config.pos_var(r)].iter().enumerate() {
            let c = config.cell(id);
            row += w * c.row as f64;
            col += w * c.col as f64;
        }
        (row, col)
    }

    /// Believed cell of a pod, following its carrier when it is on a robot.
    pub fn pod_cell(&self, config: &WarehouseConfig, p: usize) -> Cell {
        let loc = self.pod_loc(config, p);
        config
            .loc_cell(p, loc)
            .unwrap_or_else(|| self.robot_cell(config, loc - 1 - config.workstations.len()))
    }
}

/// Auctions open tasks, in list order, among idle robots. A bid is the
/// Manhattan distance from the robot's mean position to the pod plus the pod
/// to its workstation; the lowest bid wins, ties go to the lowest robot id.
pub fn run_auction(
    config: &WarehouseConfig,
    view: &BeliefView,
    tasks: &[Task],
    status: &mut [TaskStatus],
    idle: &mut [bool],
    step: usize,
) -> Vec<AuctionRecord> {
    let mut records = Vec::new();
    for (t, task) in tasks.iter().enumerate() {
        if status[t] != TaskStatus::Open {
            continue;
        }
        let pod = view.pod_cell(config, task.pod);
        let leg = pod.manhattan(config.workstations[task.workstation]) as f64;
        let bids: Vec<(usize, f64)> = (0..idle.len())
            .filter(|&r| idle[r])
            .map(|r| {
                let (row, col) = view.mean_position(config, r);
                let dist = libm::fabs(row - pod.row as f64) + libm::fabs(col - pod.col as f64);
                (r, dist + leg)
            })
            .collect();
        let Some(&(winner, _)) = bids.iter().fold(None::<&(usize, f64)>, |best, bid| match best {
            Some(b) if b.1 <= bid.1 => Some(b),
            _ => Some(bid),
        }) else {
            break;
        };
        idle[winner] = false;
        status[t] = TaskStatus::Assigned(winner);
        records.push(AuctionRecord {
            step,
            task: t,
            bids,
            winner,
        });
    }
    records
}

/// What the controller knows about the other robots when checking whether
/// a cell is free.
#[derive(Clone, Debug, PartialEq)]
pub enum Occupancy<'a> {
    /// Another robot is believed in the cell with probability above 0.5.
    Belief(&'a BeliefView),
    /// Last position reading of each robot.
    Readings(&'a [Cell]),
}

/// Where robot `r` is heading and what it does on arrival: the pod of its
/// task (load), the task's workstation once it carries the pod (unload), or
/// its start cell when idle.
fn goal(config: &WarehouseConfig, view: &BeliefView, r: usize, tasks: &[Task], status: &[TaskStatus]) -> (Cell, RobotAction) {
    let task = status.iter().position(|&s| s == TaskStatus::Assigned(r)).map(|t| tasks[t]);
    match (task, view.robot_carried(config, r)) {
        (Some(t), Some(c)) if c == t.pod => {
            let dest = Dest::Workstation(t.workstation);
            (config.dest_cell(t.pod, dest), RobotAction::Unload(t.pod, dest))
        }
        (_, Some(c)) => (config.pods[c], RobotAction::Unload(c, Dest::Home)),
        (Some(t), None) => (view.pod_cell(config, t.pod), RobotAction::Load(t.pod)),
        (None, None) => (config.robots[r].0, RobotAction::Noop),
    }
}

/// Grid distances to `target` avoiding `obstacles` (`usize::MAX` when cut off).
fn distances(config: &WarehouseConfig, target: Cell, obstacles: &BTreeSet<Cell>) -> Vec<usize> {
    let mut dist = vec![usize::MAX; config.num_cells()];
    let mut queue = alloc::collections::VecDeque::new();
    dist[config.cell_id(target)] = 0;
    queue.push_back(target);
    while let Some(c) = queue.pop_front() {
        let d = dist[config.cell_id(c)];
        for n in config.neighbors(c) {
            let id = config.cell_id(n);
            if dist[id] == usize::MAX && !obstacles.contains(&n) {
                dist[id] = d + 1;
                queue.push_back(n);
            }
        }
    }
    dist
}

fn turn_cost(from: Heading, to: Heading) -> usize {
    match (to.index() + 4 - from.index()) % 4 {
        0 => 0,
        2 => 2,
        _ => 1,
    }
}

fn turn_towards(from: Heading, to: Heading) -> RobotAction {
    match (to.index() + 4 - from.index()) % 4 {
        0 => RobotAction::Forward,
        1 => RobotAction::TurnRight,
        _ => RobotAction::TurnLeft,
    }
}

/// Headings whose neighbour lies on a shortest path to `target`, cheapest
/// turn first. Paths avoid `obstacles` when possible.
fn route(config: &WarehouseConfig, here: Cell, heading: Heading, target: Cell, obstacles: &BTreeSet<Cell>) -> Vec<Heading> {
    let best = |dist: &[usize]| {
        config
            .neighbors(here)
            .into_iter()
            .map(|n| dist[config.cell_id(n)])
            .min()
            .unwrap_or(usize::MAX)
    };
    let mut dist = distances(config, target, obstacles);
    if best(&dist) == usize::MAX {
        dist = distances(config, target, &BTreeSet::new());
    }
    let step = best(&dist);
    if step == usize::MAX {
        return Vec::new();
    }
    let mut toward: Vec<Heading> = Heading::ALL
        .into_iter()
        .filter(|&h| config.neighbor(here, h).is_some_and(|n| dist[config.cell_id(n)] == step))
        .collect();
    toward.sort_by_key(|&h| (turn_cost(heading, h), h.index()));
    toward
}

/// Chooses every robot's action.
///
/// Each robot drives along a shortest grid path to its goal and performs the
/// goal's action on arrival. Paths avoid the cells of lower-numbered robots
/// and of robots already standing at their own goal. A robot turns towards
/// the best free next cell and drives forward once it faces it. A cell is
/// taken when another robot is believed there with probability above 0.5
/// (decentralised mode: was last read there) or, in centralised mode, when a
/// lower-numbered robot claimed it this step. When two robots each want the
/// other's cell the higher-numbered one steps aside; otherwise a robot with
/// no free next cell waits.
pub fn control_step(
    config: &WarehouseConfig,
    mode: ControlMode,
    view: &BeliefView,
    others: &Occupancy<'_>,
    tasks: &[Task],
    status: &[TaskStatus],
) -> JointAction {
    let robots = config.num_robots();
    let goals: Vec<(Cell, RobotAction)> = (0..robots).map(|r| goal(config, view, r, tasks, status)).collect();
    let cells: Vec<Cell> = match others {
        Occupancy::Belief(b) => (0..robots).map(|s| b.robot_cell(config, s)).collect(),
        Occupancy::Readings(cells) => cells.to_vec(),
    };
    let occupied = |r: usize, cell: Cell| match others {
        Occupancy::Belief(b) => (0..robots).any(|s| s != r && b.marginals[config.pos_var(s)][config.cell_id(cell)] > 0.5),
        Occupancy::Readings(cells) => cells.iter().enumerate().any(|(s, &c)| s != r && c == cell),
    };

    let plans: Vec<(Cell, Heading, Vec<Heading>)> = (0..robots)
        .map(|r| {
            let here = view.robot_cell(config, r);
            let heading = view.robot_heading(config, r);
            let obstacles: BTreeSet<Cell> = (0..robots)
                .filter(|&s| s != r && (s < r || cells[s] == goals[s].0))
                .map(|s| cells[s])
                .filter(|&c| c != here)
                .collect();
            (here, heading, route(config, here, heading, goals[r].0, &obstacles))
        })
        .collect();
    let wants: Vec<Option<Cell>> = (0..robots)
        .map(|r| {
            let (here, _, toward) = &plans[r];
            if *here == goals[r].0 {
                None
            } else {
                toward.first().and_then(|&h| config.neighbor(*here, h))
            }
        })
        .collect();

    let mut reserved: BTreeSet<Cell> = BTreeSet::new();
    let mut joint = Vec::with_capacity(robots);
    for r in 0..robots {
        let (here, heading, toward) = &plans[r];
        let (here, heading) = (*here, *heading);
        reserved.insert(here);
        if here == goals[r].0 {
            joint.push(goals[r].1);
            continue;
        }
        let free = |c: Cell, reserved: &BTreeSet<Cell>| {
            !occupied(r, c) && !(mode == ControlMode::Centralised && reserved.contains(&c))
        };
        let next = |h: Heading| config.neighbor(here, h).expect("routes stay on the grid");
        let mut choice = toward.iter().copied().find(|&h| free(next(h), &reserved));
        if choice.is_none() {
            let blocker = wants[r].and_then(|c| (0..robots).find(|&s| s != r && cells[s] == c));
            if blocker.is_some_and(|s| s < r && wants[s] == Some(here)) {
                choice = Heading::ALL
                    .into_iter()
                    .filter(|&h| config.neighbor(here, h).is_some_and(|c| free(c, &reserved) && Some(c) != wants[r]))
                    .min_by_key(|&h| (turn_cost(heading, h), h.index()));
            }
        }
        let action = match choice {
            None => RobotAction::Noop,
            Some(h) => {
                let action = turn_towards(heading, h);
                if action == RobotAction::Forward {
                    reserved.insert(next(h));
                }
                action
            }
        };
        joint.push(action);
    }
    joint
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FilterKind {
    Psbf,
    Bk,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub joint_action: String,
    pub tasks_done: usize,
    pub filter_time: Duration,
    pub skipped_fraction: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryStats {
    pub tasks_completed: usize,
    pub mean_filter_time: Duration,
    pub mean_skipped_fraction: f64,
    pub auctions: Vec<AuctionRecord>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub rows: Vec<TraceRow>,
    pub summary: SummaryStats,
}

/// Moves that end in the same cell as another robot, or swap two robots,
/// are undone until no two robots share a cell.
fn resolve_collisions(config: &WarehouseConfig, before: &[usize], after: &mut [usize]) {
    let robots = config.num_robots();
    loop {
        let mut undo = BTreeSet::new();
        for a in 0..robots {
            for b in a + 1..robots {
                let (pa, pb) = (config.pos_var(a), config.pos_var(b));
                let same = after[pa] == after[pb];
                let swap = after[pa] == before[pb] && after[pb] == before[pa] && after[pa] != before[pa];
                if same || swap {
                    for r in [a, b] {
                        if after[config.pos_var(r)] != before[config.pos_var(r)] {
                            undo.insert(r);
                        }
                    }
                }
            }
        }
        if undo.is_empty() {
            return;
        }
        for r in undo {
            after[config.pos_var(r)] = before[config.pos_var(r)];
        }
    }
}

fn delivered(config: &WarehouseConfig, tasks: &[Task], s: &[usize]) -> Vec<bool> {
    tasks
        .iter()
        .map(|t| s[config.pod_var(t.pod)] == config.loc_value(Dest::Workstation(t.workstation)))
        .collect()
}

/// Runs the warehouse for `steps` steps. The start state is known exactly.
/// Ground truth, controller and filter all run in this thread; only the
/// filter step uses `exec`.
pub fn simulate<E: Executor, C: Clock>(
    config: &WarehouseConfig,
    filter: FilterKind,
    steps: usize,
    seed: u64,
    exec: &E,
    clock: &C,
    filter_config: FilterConfig,
) -> Result<Trace> {
    config.validate()?;
    let ctx = StepContext::new(exec, clock, filter_config);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let domains: Vec<usize> = config.state_vars().iter().map(|v| v.domain).collect();
    let layout: Arc<FactorLayout> = FactorLayout::new(config.clustering(), domains)?;
    let start = config.initial_state();
    let mut state = start.encode(config);
    let mut belief = FactoredBelief::point_mass(layout, &state)?;
    let mut readings: Vec<Cell> = start.robots.iter().map(|r| r.cell).collect();

    let tasks = config.tasks();
    let mut status = vec![TaskStatus::Open; tasks.len()];
    let mut idle = vec![true; config.num_robots()];
    let mut cache: BTreeMap<JointAction, (ActionDbn, PassivityReport)> = BTreeMap::new();

    let mut rows = Vec::with_capacity(steps);
    let mut auctions = Vec::new();
    let mut total_time = Duration::ZERO;
    let mut total_skipped = 0.0;
    let mut tasks_done = 0;

    for step in 0..steps {
        let view = BeliefView::from_factored(&belief);
        for (t, task) in tasks.iter().enumerate() {
            if let TaskStatus::Assigned(r) = status[t] {
                let at_ws = view.pod_loc(config, task.pod) == config.loc_value(Dest::Workstation(task.workstation));
                if at_ws && view.robot_carried(config, r).is_none() {
                    status[t] = TaskStatus::Done;
                    idle[r] = true;
                }
            }
        }
        auctions.extend(run_auction(config, &view, &tasks, &mut status, &mut idle, step));
        let others = match config.mode {
            ControlMode::Centralised => Occupancy::Belief(&view),
            ControlMode::Decentralised => Occupancy::Readings(&readings),
        };
        let joint = control_step(config, config.mode, &view, &others, &tasks, &status);

        if !cache.contains_key(&joint) {
            let dbn = build_action_dbn(config, &joint)?;
            let report = detect_all(&dbn);
            cache.insert(joint.clone(), (dbn, report));
        }
        let (dbn, report) = &cache[&joint];

        let mut next = dbn.sample_transition(&state, &mut rng);
        resolve_collisions(config, &state, &mut next);
        let o = dbn.sample_observation(&next, &mut rng);
        state = next;
        readings = (0..config.num_robots()).map(|r| config.cell(o[3 * r])).collect();

        let (updated, stats) = match filter {
            FilterKind::Psbf => psbf_step(&ctx, &belief, dbn, &o, report)?,
            FilterKind::Bk => bk_step(&ctx, &belief, dbn, &o)?,
        };
        belief = updated;
        tasks_done = delivered(config, &tasks, &state).iter().filter(|&&d| d).count();
        total_time += stats.total_time();
        total_skipped += stats.skipped_fraction();
        rows.push(TraceRow {
            step,
            joint_action: dbn.name().into(),
            tasks_done,
            filter_time: stats.total_time(),
            skipped_fraction: stats.skipped_fraction(),
        });
    }

    let summary = SummaryStats {
        tasks_completed: tasks_done,
        mean_filter_time: if steps == 0 { Duration::ZERO } else { total_time / steps as u32 },
        mean_skipped_fraction: if steps == 0 { 0.0 } else { total_skipped / steps as f64 },
        auctions,
    };
    Ok(Trace { rows, summary })
}
