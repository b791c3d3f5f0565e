use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ExpBase;
use crate::error::{invalid, Error, Result};
use crate::prob::{Probability, Seed};
use crate::report::SimReport;
use crate::seed::run_trials;

/// Agents bidding for tasks. Matrices are indexed `[agent][task]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Marketplace {
    pub values: Vec<f64>,
    pub competence: Vec<Vec<f64>>,
    /// Empty means zero cost everywhere.
    #[serde(default)]
    pub cost: Vec<Vec<f64>>,
    /// Quality lost on task `j` when its agent substitutes a cheaper model.
    pub gaps: Vec<f64>,
    pub budgets: Vec<f64>,
}

impl Marketplace {
    pub fn n_agents(&self) -> usize {
        self.competence.len()
    }

    pub fn m_tasks(&self) -> usize {
        self.values.len()
    }

    pub fn v_max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn v_min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn cost(&self, agent: usize, task: usize) -> f64 {
        self.cost.get(agent).map_or(0.0, |row| row[task])
    }

    pub fn validate(&self) -> Result<()> {
        let (n, m) = (self.n_agents(), self.m_tasks());
        if n == 0 || m == 0 {
            return Err(invalid("market", "need at least one agent and one task"));
        }
        if self.values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(invalid("values", "must be positive and finite"));
        }
        let unit = |x: &f64| (0.0..=1.0).contains(x);
        if self
            .competence
            .iter()
            .any(|r| r.len() != m || !r.iter().all(unit))
        {
            return Err(invalid(
                "competence",
                format!("need {n} rows of {m} values in [0, 1]"),
            ));
        }
        if !self.cost.is_empty()
            && (self.cost.len() != n
                || self
                    .cost
                    .iter()
                    .any(|r| r.len() != m || r.iter().any(|c| !(c.is_finite() && *c >= 0.0))))
        {
            return Err(invalid(
                "cost",
                "need an n x m matrix of non-negative values",
            ));
        }
        if self.gaps.len() != m || !self.gaps.iter().all(unit) {
            return Err(invalid("gaps", format!("need {m} values in [0, 1]")));
        }
        if self.budgets.len() != n || self.budgets.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
            return Err(invalid("budgets", format!("need {n} non-negative values")));
        }
        Ok(())
    }

    fn task_value(&self, agent: usize, task: usize) -> f64 {
        self.values[task] * self.competence[agent][task]
    }

    /// Welfare `sum_j V_j q_{f(j), j}` of an allocation.
    pub fn welfare(&self, allocation: &[Option<usize>]) -> f64 {
        allocation
            .iter()
            .enumerate()
            .filter_map(|(j, a)| a.map(|i| self.task_value(i, j)))
            .sum()
    }
}

/// Behavioural model of one LLM agent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentModel {
    /// Within-horizon irrationality.
    pub eps1: Probability,
    /// Prompt shift magnitude sigma_pi.
    pub prompt_shift: f64,
    pub k_star: u32,
}

impl AgentModel {
    pub fn validate(&self) -> Result<()> {
        if self.eps1.value() >= 0.5 {
            return Err(invalid("eps1", "must be below 0.5"));
        }
        if !(self.prompt_shift >= 0.0 && self.prompt_shift.is_finite()) {
            return Err(invalid("prompt_shift", "must be non-negative"));
        }
        if self.k_star == 0 {
            return Err(invalid("k_star", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MillipedeOptions {
    /// Prompt shift sigma_pi checked against the smallest margin.
    pub sigma_pi: f64,
    pub sigma_ratio_limit: Probability,
    pub max_nodes: usize,
}

impl Default for MillipedeOptions {
    fn default() -> Self {
        MillipedeOptions {
            sigma_pi: 0.0,
            sigma_ratio_limit: Probability::clamped(0.05),
            max_nodes: 1 << 16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Child {
    Node(usize),
    Leaf(usize),
}

/// Clinching offer: `agent` may take `task` at `price`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionNode {
    pub agent: usize,
    pub task: usize,
    pub price: f64,
    /// `V q - c - price`.
    pub utility: f64,
    /// Accept payoff minus the best payoff reachable by rejecting within
    /// two moves of this agent.
    pub margin: f64,
    pub depth: usize,
    pub accept: Child,
    pub reject: Child,
}

impl DecisionNode {
    pub fn best_reject(&self) -> f64 {
        self.utility - self.margin
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Terminal {
    /// Agent holding each task.
    pub allocation: Vec<Option<usize>>,
    pub payments: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismTree {
    pub nodes: Vec<DecisionNode>,
    pub terminals: Vec<Terminal>,
    pub root: Child,
    /// Agents in offer order.
    pub order: Vec<usize>,
    /// Smallest node margin, infinite for a tree without decisions.
    pub delta_min: f64,
    pub sigma_ratio: f64,
}

impl MechanismTree {
    /// Terminal reached when every offer is accepted.
    pub fn greedy_terminal(&self) -> &Terminal {
        let mut at = self.root;
        loop {
            match at {
                Child::Node(i) => at = self.nodes[i].accept,
                Child::Leaf(l) => return &self.terminals[l],
            }
        }
    }

    /// Indented text dump of the game tree.
    pub fn dump(&self, market: &Marketplace) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "millipede: {} decision nodes, {} terminals, delta_min {:.6}, sigma ratio {:.6}",
            self.nodes.len(),
            self.terminals.len(),
            self.delta_min,
            self.sigma_ratio
        );
        self.dump_child(self.root, "", "root", market, &mut out);
        out
    }

    fn dump_child(
        &self,
        c: Child,
        indent: &str,
        label: &str,
        market: &Marketplace,
        out: &mut String,
    ) {
        match c {
            Child::Node(i) => {
                let n = &self.nodes[i];
                let _ = writeln!(
                    out,
                    "{indent}{label}: [{i}] agent {} task {} price {:.6} utility {:.6} margin {:.6}",
                    n.agent, n.task, n.price, n.utility, n.margin
                );
                let deeper = format!("{indent}  ");
                self.dump_child(n.accept, &deeper, "accept", market, out);
                self.dump_child(n.reject, &deeper, "reject", market, out);
            }
            Child::Leaf(l) => {
                let t = &self.terminals[l];
                let alloc: Vec<String> = t
                    .allocation
                    .iter()
                    .map(|a| a.map_or("-".into(), |i| i.to_string()))
                    .collect();
                let pay: Vec<String> = t.payments.iter().map(|p| format!("{p:.6}")).collect();
                let _ = writeln!(
                    out,
                    "{indent}{label}: end allocation [{}] payments [{}] welfare {:.6}",
                    alloc.join(", "),
                    pay.join(", "),
                    market.welfare(&t.allocation)
                );
            }
        }
    }
}

#[derive(Clone)]
struct State {
    pos: usize,
    declined: Vec<bool>,
    open: Vec<bool>,
    budgets: Vec<f64>,
    allocation: Vec<Option<usize>>,
    payments: Vec<f64>,
}

#[derive(Clone, Copy)]
struct Offer {
    agent: usize,
    task: usize,
    price: f64,
    utility: f64,
}

struct Builder<'a> {
    market: &'a Marketplace,
    order: Vec<usize>,
    max_nodes: usize,
    nodes: Vec<DecisionNode>,
    terminals: Vec<Terminal>,
}

impl Builder<'_> {
    /// Highest competence on `task` among agents still to move after `pos`.
    fn competitor(&self, pos: usize, task: usize) -> f64 {
        self.order[pos + 1..]
            .iter()
            .map(|&k| self.market.competence[k][task])
            .fold(0.0, f64::max)
    }

    /// Next offer from `s`, advancing past agents with nothing to take.
    fn next_offer(&self, s: &State) -> Option<(State, Offer)> {
        let mut s = s.clone();
        while s.pos < self.order.len() {
            let i = self.order[s.pos];
            if s.budgets[i] > 0.0 {
                let mut best: Option<Offer> = None;
                for j in 0..self.market.m_tasks() {
                    let q = self.market.competence[i][j];
                    if !s.open[j] || s.declined[j] || q <= 0.0 {
                        continue;
                    }
                    let v = self.market.values[j];
                    let price = v * self.competitor(s.pos, j) / q;
                    let utility = v * q - self.market.cost(i, j) - price;
                    if price > s.budgets[i] || utility < 0.0 {
                        continue;
                    }
                    if best.is_none_or(|b| v * q > self.market.task_value(i, b.task)) {
                        best = Some(Offer {
                            agent: i,
                            task: j,
                            price,
                            utility,
                        });
                    }
                }
                if let Some(o) = best {
                    return Some((s, o));
                }
            }
            s.pos += 1;
            s.declined.iter_mut().for_each(|d| *d = false);
        }
        None
    }

    fn expand(&mut self, s: State, depth: usize) -> Result<Child> {
        let Some((s, o)) = self.next_offer(&s) else {
            self.terminals.push(Terminal {
                allocation: s.allocation,
                payments: s.payments,
            });
            return Ok(Child::Leaf(self.terminals.len() - 1));
        };
        let mut rejected = s.clone();
        rejected.declined[o.task] = true;
        let mut accepted = s;
        accepted.open[o.task] = false;
        accepted.budgets[o.agent] -= o.price;
        accepted.payments[o.agent] += o.price;
        accepted.allocation[o.task] = Some(o.agent);

        let best_reject = self
            .next_offer(&rejected)
            .filter(|(_, n)| n.agent == o.agent)
            .map_or(0.0, |(_, n)| n.utility.max(0.0));
        let margin = o.utility - best_reject;
        let id = self.nodes.len();
        if margin < 0.0 {
            return Err(Error::NegativeMargin { node: id, margin });
        }
        if id >= self.max_nodes {
            return Err(Error::Oversize(format!(
                "millipede tree exceeds {} nodes",
                self.max_nodes
            )));
        }
        self.nodes.push(DecisionNode {
            agent: o.agent,
            task: o.task,
            price: o.price,
            utility: o.utility,
            margin,
            depth,
            accept: Child::Leaf(0),
            reject: Child::Leaf(0),
        });
        let accept = self.expand(accepted, depth + 1)?;
        let reject = self.expand(rejected, depth + 1)?;
        self.nodes[id].accept = accept;
        self.nodes[id].reject = reject;
        Ok(Child::Node(id))
    }
}

/// Clinching millipede game. Agents move in descending order of total
/// value `sum_j V_j q_ij`; each is offered, in turn, its highest-value open
/// task that it can afford at non-negative utility. The price is
/// `V_j q_(2) / q_ij` where `q_(2)` is the best competence among agents
/// still to move (zero for the last one).
pub fn build_millipede(market: &Marketplace, opts: &MillipedeOptions) -> Result<MechanismTree> {
    market.validate()?;
    if !(opts.sigma_pi >= 0.0 && opts.sigma_pi.is_finite()) {
        return Err(invalid("sigma_pi", "must be non-negative"));
    }
    let n = market.n_agents();
    let m = market.m_tasks();
    let mut order: Vec<usize> = (0..n).collect();
    let total = |i: usize| (0..m).map(|j| market.task_value(i, j)).sum::<f64>();
    order.sort_by(|&a, &b| total(b).total_cmp(&total(a)).then(a.cmp(&b)));

    let mut b = Builder {
        market,
        order: order.clone(),
        max_nodes: opts.max_nodes,
        nodes: Vec::new(),
        terminals: Vec::new(),
    };
    let root = b.expand(
        State {
            pos: 0,
            declined: vec![false; m],
            open: vec![true; m],
            budgets: market.budgets.clone(),
            allocation: vec![None; m],
            payments: vec![0.0; n],
        },
        0,
    )?;
    let delta_min = b
        .nodes
        .iter()
        .map(|n| n.margin)
        .fold(f64::INFINITY, f64::min);
    let sigma_ratio = if opts.sigma_pi == 0.0 {
        0.0
    } else {
        opts.sigma_pi / delta_min
    };
    let limit = opts.sigma_ratio_limit.value();
    if sigma_ratio > limit {
        return Err(Error::GuardTripped {
            ratio: sigma_ratio,
            limit,
        });
    }
    Ok(MechanismTree {
        nodes: b.nodes,
        terminals: b.terminals,
        root,
        order,
        delta_min,
        sigma_ratio,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub nodes_checked: usize,
    pub terminals_checked: usize,
    pub min_margin: f64,
    pub issues: Vec<String>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.issues.is_empty()
    }
}

/// Walk every history and recheck each node from the market data alone:
/// utility, budget and allocation feasibility, and the two-move OSP
/// comparison (worst-case accept against the best offer the agent can
/// reach by rejecting before it moves again).
pub fn audit_millipede(tree: &MechanismTree, market: &Marketplace) -> AuditReport {
    let mut r = AuditReport {
        nodes_checked: 0,
        terminals_checked: 0,
        min_margin: f64::INFINITY,
        issues: Vec::new(),
    };
    let mut stack = vec![(
        tree.root,
        market.budgets.clone(),
        vec![None; market.m_tasks()],
        vec![0.0; market.n_agents()],
    )];
    while let Some((c, budgets, alloc, paid)) = stack.pop() {
        match c {
            Child::Leaf(l) => {
                r.terminals_checked += 1;
                let t = &tree.terminals[l];
                if t.allocation != alloc {
                    r.issues
                        .push(format!("terminal {l}: allocation differs from history"));
                }
                if t.payments
                    .iter()
                    .zip(&paid)
                    .any(|(a, b)| (a - b).abs() > 1e-9)
                {
                    r.issues
                        .push(format!("terminal {l}: payments differ from history"));
                }
            }
            Child::Node(id) => {
                r.nodes_checked += 1;
                let n = &tree.nodes[id];
                let (i, j) = (n.agent, n.task);
                let u = market.task_value(i, j) - market.cost(i, j) - n.price;
                if (u - n.utility).abs() > 1e-9 {
                    r.issues
                        .push(format!("node {id}: recorded utility {} != {u}", n.utility));
                }
                if alloc[j].is_some() {
                    r.issues
                        .push(format!("node {id}: task {j} already allocated"));
                }
                if n.price < 0.0 || n.price > budgets[i] + 1e-12 {
                    r.issues.push(format!("node {id}: price outside budget"));
                }
                // accepting never forces a later offer, so the worst case is u
                let worst_accept = u;
                let best_reject = first_moves(tree, n.reject, i)
                    .into_iter()
                    .map(|k| {
                        let m = &tree.nodes[k];
                        market.task_value(i, m.task) - market.cost(i, m.task) - m.price
                    })
                    .fold(0.0, f64::max);
                let margin = worst_accept - best_reject;
                r.min_margin = r.min_margin.min(margin);
                if margin < 0.0 {
                    r.issues.push(format!("node {id}: OSP margin {margin} < 0"));
                }
                let mut a2 = alloc.clone();
                a2[j] = Some(i);
                let mut b2 = budgets.clone();
                b2[i] -= n.price;
                let mut p2 = paid.clone();
                p2[i] += n.price;
                stack.push((n.accept, b2, a2, p2));
                stack.push((n.reject, budgets, alloc, paid));
            }
        }
    }
    r
}

/// First decision nodes of `agent` on every path below `c`.
fn first_moves(tree: &MechanismTree, c: Child, agent: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut stack = vec![c];
    while let Some(c) = stack.pop() {
        if let Child::Node(k) = c {
            let n = &tree.nodes[k];
            if n.agent == agent {
                out.push(k);
            } else {
                stack.push(n.accept);
                stack.push(n.reject);
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketRun {
    /// Mean welfare across trials.
    pub welfare: f64,
    /// Share of visited decision nodes where the agent rejected.
    pub violation_rate: SimReport,
    /// Most frequent terminal allocation.
    pub allocation: Vec<Option<usize>>,
    pub decisions: u64,
}

/// Play the tree `trials` times. At each node the agent sees its accept
/// payoff shifted by `+-sigma_pi` (one Rademacher draw per node), picks
/// the better side, and with probability `eps1` takes the other one.
pub fn run_marketplace(
    tree: &MechanismTree,
    market: &Marketplace,
    agents: &[AgentModel],
    trials: u64,
    seed: Seed,
) -> Result<MarketRun> {
    market.validate()?;
    if agents.len() != market.n_agents() {
        return Err(invalid(
            "agents",
            format!("need {} agent models", market.n_agents()),
        ));
    }
    for a in agents {
        a.validate()?;
    }
    if trials == 0 {
        return Err(invalid("trials", "must be positive"));
    }
    let plays = run_trials(seed, trials, |_, rng| {
        let (mut decisions, mut violations) = (0u64, 0u64);
        let mut at = tree.root;
        loop {
            match at {
                Child::Leaf(l) => return (l, decisions, violations),
                Child::Node(k) => {
                    let n = &tree.nodes[k];
                    let a = &agents[n.agent];
                    let shift = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                    let mut accept = n.utility + shift * a.prompt_shift >= n.best_reject();
                    if rng.random_bool(a.eps1.value()) {
                        accept = !accept;
                    }
                    decisions += 1;
                    if accept {
                        at = n.accept;
                    } else {
                        violations += 1;
                        at = n.reject;
                    }
                }
            }
        }
    });
    let mut counts = vec![0u64; tree.terminals.len()];
    let (mut decisions, mut violations) = (0, 0);
    for &(l, d, v) in &plays {
        counts[l] += 1;
        decisions += d;
        violations += v;
    }
    let welfare = counts
        .iter()
        .zip(&tree.terminals)
        .filter(|(&c, _)| c > 0)
        .map(|(&c, t)| (c as f64 / trials as f64) * market.welfare(&t.allocation))
        .sum();
    let modal = counts
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
        .map_or(0, |(l, _)| l);
    let violation_rate = if decisions == 0 {
        SimReport {
            estimate: 0.0,
            ci_low: 0.0,
            ci_high: 0.0,
            trials,
            master_seed: seed,
        }
    } else {
        SimReport::proportion(violations, decisions, seed)?
    };
    Ok(MarketRun {
        welfare,
        violation_rate,
        allocation: tree.terminals[modal].allocation.clone(),
        decisions,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectiveSettings {
    pub alpha: Probability,
    pub kappa: f64,
    pub base: ExpBase,
    /// Mechanism violation probability per allocated task.
    pub eps: Probability,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectiveRun {
    pub welfare: SimReport,
    pub loss: SimReport,
    /// Expected loss `sum_j V_j (eps q + Delta_j (1 - a_j + a_j base^-kappa))`.
    pub closed_form_loss: f64,
    /// Welfare of the greedy allocation with no violation or substitution.
    pub w_star: f64,
    pub verified_fraction: f64,
}

/// Selective verification on the tree's greedy allocation. Every agent
/// with a positive gap substitutes. Task `j` is verified with probability
/// `a_j = max(alpha, alpha V_j / V_max)`; verification misses a
/// substitution with probability `base^-kappa`, otherwise the agent is
/// penalised and quality restored. A mechanism violation loses the task.
pub fn run_selective(
    market: &Marketplace,
    tree: &MechanismTree,
    s: &SelectiveSettings,
    trials: u64,
    seed: Seed,
) -> Result<SelectiveRun> {
    market.validate()?;
    if !(s.kappa > 0.0) || trials == 0 {
        return Err(invalid("kappa", "kappa and trials must be positive"));
    }
    let alloc = &tree.greedy_terminal().allocation;
    if alloc.len() != market.m_tasks() {
        return Err(invalid("tree", "built from a different market"));
    }
    let miss = s.base.neg_pow(s.kappa);
    let alpha = s.alpha.value();
    let eps = s.eps.value();
    let vmax = market.v_max();
    let tasks: Vec<(f64, f64, f64, f64)> = alloc
        .iter()
        .enumerate()
        .filter_map(|(j, a)| {
            a.map(|i| {
                let v = market.values[j];
                let rate = alpha.max(alpha * v / vmax);
                (v, market.competence[i][j], market.gaps[j], rate)
            })
        })
        .collect();
    let w_star: f64 = tasks.iter().map(|t| t.0 * t.1).sum();
    let closed_form_loss = tasks
        .iter()
        .map(|&(v, q, d, a)| v * (eps * q + d * (1.0 - a + a * miss)))
        .sum();

    let runs = run_trials(seed, trials, |_, rng| {
        let (mut loss, mut verified) = (0.0, 0u64);
        for &(v, q, d, a) in &tasks {
            let violated = rng.random_bool(eps);
            let checked = rng.random_bool(a);
            let missed = rng.random_bool(miss);
            verified += checked as u64;
            let undetected = d > 0.0 && !(checked && !missed);
            loss += v * (if violated { q } else { 0.0 } + if undetected { d } else { 0.0 });
        }
        (loss, verified)
    });
    let losses: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let welfare: Vec<f64> = losses.iter().map(|l| w_star - l).collect();
    let verified: u64 = runs.iter().map(|r| r.1).sum();
    let slots = (tasks.len() as u64 * trials).max(1);
    Ok(SelectiveRun {
        welfare: SimReport::mean(&welfare, seed)?,
        loss: SimReport::mean(&losses, seed)?,
        closed_form_loss,
        w_star,
        verified_fraction: verified as f64 / slots as f64,
    })
}
