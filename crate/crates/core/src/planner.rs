//! Content-path planning when visiting one point improves beliefs about
//! others: incentivizable sets, reachability, greedy and shortest paths, and
//! the shortest-path integer program.

use std::collections::VecDeque;

use promptsim_mip::{Expr, MipModel, ObjectiveSense, Sense, VarId};
use serde::{Deserialize, Serialize, Serializer};

use crate::dynamics::EcosystemState;
use crate::ecosystem::{EcosystemInstance, TOL};
use crate::policy::simulate_no_prompt;
use crate::CoreError;

pub const DEFAULT_MAX_NODES: usize = 12;

/// Visiting point `j` adds `gain[j][j']` believed reward at `j'`; point `j`
/// can be prompted once `base[j]` plus the gains from visited points reaches
/// `threshold[j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralizationModel {
    /// Closure depth of each point from the initial set; `None` if never
    /// incentivizable.
    pub level: Vec<Option<usize>>,
    pub gain: Vec<Vec<f64>>,
    pub threshold: Vec<f64>,
    pub initial_set: Vec<usize>,
    #[serde(default)]
    pub base: Vec<f64>,
}

impl GeneralizationModel {
    pub fn new(
        gain: Vec<Vec<f64>>,
        threshold: Vec<f64>,
        base: Vec<f64>,
        initial_set: Vec<usize>,
    ) -> Result<Self, CoreError> {
        let mut model = GeneralizationModel { level: Vec::new(), gain, threshold, initial_set, base };
        model.validate_data()?;
        model.level = model.compute_levels();
        Ok(model)
    }

    pub fn num_points(&self) -> usize {
        self.threshold.len()
    }

    fn validate_data(&mut self) -> Result<(), CoreError> {
        let n = self.threshold.len();
        if self.base.is_empty() {
            self.base = vec![0.0; n];
        }
        if self.gain.len() != n || self.gain.iter().any(|r| r.len() != n) || self.base.len() != n {
            return Err(CoreError::DimensionMismatch(format!("generalization model of {n} points")));
        }
        let finite_nonneg = |x: &f64| x.is_finite() && *x >= 0.0;
        if !self.gain.iter().flatten().all(finite_nonneg) {
            return Err(CoreError::InvalidValue("gains must be finite and nonnegative".into()));
        }
        if !self.threshold.iter().all(|x| x.is_finite()) || !self.base.iter().all(|x| x.is_finite()) {
            return Err(CoreError::InvalidValue("thresholds and base credit must be finite".into()));
        }
        if let Some(&index) = self.initial_set.iter().find(|&&j| j >= n) {
            return Err(CoreError::IndexOutOfRange { what: "initial point", index, len: n });
        }
        Ok(())
    }

    /// Checks the data and recomputes levels, e.g. after deserializing.
    pub fn validate(&mut self) -> Result<(), CoreError> {
        self.validate_data()?;
        self.level = self.compute_levels();
        Ok(())
    }

    fn initial_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.num_points()];
        for &j in &self.initial_set {
            mask[j] = true;
        }
        mask
    }

    fn unlocked(&self, visited: &[bool], j: usize) -> bool {
        if visited[j] {
            return true;
        }
        let credit: f64 = visited.iter().enumerate().filter(|(_, &v)| v).map(|(i, _)| self.gain[i][j]).sum();
        self.base[j] + credit >= self.threshold[j] - TOL
    }

    fn incentivizable_mask(&self, visited: &[bool]) -> Vec<bool> {
        (0..self.num_points()).map(|j| self.unlocked(visited, j)).collect()
    }

    fn compute_levels(&self) -> Vec<Option<usize>> {
        let mut level = vec![None; self.num_points()];
        let mut current = self.initial_mask();
        for (j, &v) in current.iter().enumerate() {
            if v {
                level[j] = Some(0);
            }
        }
        for depth in 1..=self.num_points() {
            let next = self.incentivizable_mask(&current);
            if next == current {
                break;
            }
            for (j, (&n, &c)) in next.iter().zip(&current).enumerate() {
                if n && !c {
                    level[j] = Some(depth);
                }
            }
            current = next;
        }
        level
    }
}

/// Visited points plus every point whose credit clears its threshold.
pub fn incentivizable_set(model: &GeneralizationModel, visited: &[usize]) -> Vec<usize> {
    let mut mask = vec![false; model.num_points()];
    for &j in visited {
        mask[j] = true;
    }
    let out = model.incentivizable_mask(&mask);
    (0..out.len()).filter(|&j| out[j]).collect()
}

/// Whether the closure of the initial set contains `j_star`, and the depth at
/// which it first appears.
pub fn is_reachable(model: &GeneralizationModel, j_star: usize) -> (bool, Option<usize>) {
    match model.level.get(j_star).copied().flatten() {
        Some(depth) => (true, Some(depth)),
        None => (false, None),
    }
}

/// Ordered points to prompt, ending at the target.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContentPath {
    pub nodes: Vec<usize>,
    pub feasible: bool,
}

impl ContentPath {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

impl Serialize for ContentPath {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.nodes.serialize(serializer)
    }
}

/// Replays `nodes` from the initial set: every node must be incentivizable
/// given the initial set and the nodes before it.
pub fn path_is_feasible(model: &GeneralizationModel, nodes: &[usize], j_star: usize) -> bool {
    if nodes.last() != Some(&j_star) {
        return false;
    }
    let mut visited = model.initial_mask();
    for &j in nodes {
        if j >= model.num_points() || !model.unlocked(&visited, j) {
            return false;
        }
        visited[j] = true;
    }
    true
}

fn check_target(model: &GeneralizationModel, j_star: usize) -> Result<(), CoreError> {
    if j_star >= model.num_points() {
        return Err(CoreError::IndexOutOfRange { what: "target", index: j_star, len: model.num_points() });
    }
    if !is_reachable(model, j_star).0 {
        return Err(CoreError::Unreachable(j_star));
    }
    Ok(())
}

/// Prompts the target as soon as it is incentivizable; before that, the
/// incentivizable unvisited point with the largest gain toward the target.
pub fn greedy_path(model: &GeneralizationModel, j_star: usize) -> Result<ContentPath, CoreError> {
    check_target(model, j_star)?;
    let mut visited = model.initial_mask();
    let mut nodes = Vec::new();
    loop {
        if model.unlocked(&visited, j_star) {
            nodes.push(j_star);
            let feasible = path_is_feasible(model, &nodes, j_star);
            return Ok(ContentPath { nodes, feasible });
        }
        let mut pick: Option<usize> = None;
        for j in 0..model.num_points() {
            if !visited[j] && model.unlocked(&visited, j) && pick.is_none_or(|p| model.gain[j][j_star] > model.gain[p][j_star])
            {
                pick = Some(j);
            }
        }
        let j = pick.ok_or(CoreError::Unreachable(j_star))?;
        visited[j] = true;
        nodes.push(j);
    }
}

/// Shortest feasible path by breadth-first search over visited sets.
pub fn exact_shortest_path(
    model: &GeneralizationModel,
    j_star: usize,
    max_nodes: usize,
) -> Result<ContentPath, CoreError> {
    let n = model.num_points();
    if n > max_nodes || n > 63 {
        return Err(CoreError::TooLarge { size: n, max: max_nodes.min(63) });
    }
    check_target(model, j_star)?;
    let to_mask = |v: &[bool]| v.iter().enumerate().filter(|(_, &b)| b).fold(0u64, |m, (i, _)| m | 1 << i);
    let from_mask = |m: u64| (0..n).map(|i| m >> i & 1 == 1).collect::<Vec<_>>();
    let start = to_mask(&model.initial_mask());
    let mut parent: std::collections::HashMap<u64, (u64, usize)> = std::collections::HashMap::new();
    let mut queue = VecDeque::from([start]);
    while let Some(mask) = queue.pop_front() {
        let visited = from_mask(mask);
        if model.unlocked(&visited, j_star) {
            let mut nodes = vec![j_star];
            let mut at = mask;
            while at != start {
                let (prev, j) = parent[&at];
                nodes.push(j);
                at = prev;
            }
            nodes.reverse();
            let feasible = path_is_feasible(model, &nodes, j_star);
            return Ok(ContentPath { nodes, feasible });
        }
        for j in 0..n {
            if visited[j] || !model.unlocked(&visited, j) {
                continue;
            }
            let next = mask | 1 << j;
            if next != start && !parent.contains_key(&next) {
                parent.insert(next, (mask, j));
                queue.push_back(next);
            }
        }
    }
    Err(CoreError::Unreachable(j_star))
}

/// r/w_min for the greedy length bound: the target's threshold over the
/// smallest gain toward the target among the non-target nodes of `path`.
/// Infinite when some such gain is zero; 1 for a single-node path.
pub fn greedy_bound_factor(model: &GeneralizationModel, path: &ContentPath, j_star: usize) -> f64 {
    let w_min = path.nodes.iter().filter(|&&j| j != j_star).map(|&j| model.gain[j][j_star]).fold(f64::INFINITY, f64::min);
    if w_min == f64::INFINITY {
        1.0
    } else if w_min <= 0.0 {
        f64::INFINITY
    } else {
        model.threshold[j_star] / w_min
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PathIpOptions {
    /// Keep only arcs between equal or consecutive levels.
    pub level_restricted: bool,
}

/// Binary program whose optimum is the shortest feasible path length.
///
/// The initial set is collapsed into one source node `src` whose credit is
/// folded into each point's remaining need. `x_a_b` selects arc a→b; `u_c`
/// orders intermediate nodes; `g_b_a` is the credit toward `b` accumulated
/// along the path up to and including `a`.
pub fn build_shortest_path_ip(
    model: &GeneralizationModel,
    j_star: usize,
    options: PathIpOptions,
) -> Result<MipModel, CoreError> {
    let n = model.num_points();
    if j_star >= n {
        return Err(CoreError::IndexOutOfRange { what: "target", index: j_star, len: n });
    }
    let initial = model.initial_mask();
    let need: Vec<f64> = (0..n)
        .map(|b| {
            if initial[b] {
                return 0.0;
            }
            let credit: f64 = model.initial_set.iter().map(|&v| model.gain[v][b]).sum();
            model.threshold[b] - model.base[b] - credit
        })
        .collect();
    let middle: Vec<usize> = (0..n).filter(|&j| !initial[j] && j != j_star && model.level[j].is_some()).collect();
    let heads: Vec<usize> = middle.iter().copied().chain([j_star]).collect();
    let level = |j: usize| model.level[j].unwrap_or(usize::MAX);
    let arc_allowed = |from: Option<usize>, to: usize| {
        if !options.level_restricted {
            return true;
        }
        let lf = from.map_or(0, level);
        let lt = level(to);
        lt != usize::MAX && (lt == lf || lt == lf + 1)
    };

    let mut ip = MipModel::new(format!("shortest_path_{j_star}"), ObjectiveSense::Minimize);
    ip.metadata.insert("target".into(), j_star.to_string());
    // Arcs out of the source, then between intermediate nodes.
    let mut arcs: Vec<(Option<usize>, usize, VarId)> = Vec::new();
    for &b in &heads {
        if arc_allowed(None, b) {
            arcs.push((None, b, ip.add_binary(format!("x_src_{b}"))?));
        }
    }
    for &a in &middle {
        for &b in &heads {
            if a != b && arc_allowed(Some(a), b) {
                arcs.push((Some(a), b, ip.add_binary(format!("x_{a}_{b}"))?));
            }
        }
    }
    let big = middle.len() as f64;
    let order: Vec<VarId> =
        middle.iter().map(|&c| ip.add_continuous(format!("u_{c}"), 1.0, big.max(1.0))).collect::<Result<_, _>>()?;
    let credit_cap: Vec<f64> = (0..n).map(|b| middle.iter().map(|&v| model.gain[v][b]).sum()).collect();
    let mut credit = std::collections::HashMap::new();
    for &b in &heads {
        for &a in &middle {
            if a != b {
                credit.insert((b, a), ip.add_continuous(format!("g_{b}_{a}"), 0.0, credit_cap[b])?);
            }
        }
    }

    let into = |b: usize| arcs.iter().filter(move |(_, h, _)| *h == b).map(|&(_, _, x)| x);
    let out_of = |a: Option<usize>| arcs.iter().filter(move |(t, _, _)| *t == a).map(|&(_, _, x)| x);
    let sum = |vars: &mut dyn Iterator<Item = VarId>| vars.fold(Expr::new(), |e, x| e.with_term(x, 1.0));

    ip.add_constraint("target_in", sum(&mut into(j_star)), Sense::Eq, 1.0);
    ip.add_constraint("source_out", sum(&mut out_of(None)), Sense::Eq, 1.0);
    for (i, &c) in middle.iter().enumerate() {
        let mut flow = sum(&mut into(c));
        for x in out_of(Some(c)) {
            flow.add_term(x, -1.0);
        }
        ip.add_constraint(format!("flow_{c}"), flow, Sense::Eq, 0.0);
        ip.add_constraint(format!("once_{c}"), sum(&mut into(c)), Sense::Le, 1.0);
        for &(t, b, x) in &arcs {
            if t == Some(c) && b != j_star {
                let bi = middle.iter().position(|&m| m == b).expect("intermediate head");
                // u_b ≥ u_c + 1 − |C|·(1 − x_c_b)
                let e = Expr::var(order[bi]).with_term(order[i], -1.0).with_term(x, -big);
                ip.add_constraint(format!("order_{c}_{b}"), e, Sense::Ge, 1.0 - big);
            }
        }
    }
    for &(t, b, x) in &arcs {
        let name = match t {
            Some(a) => format!("{a}_{b}"),
            None => format!("src_{b}"),
        };
        // Credit toward b before b is entered covers its remaining need.
        let mut e = Expr::new().with_term(x, -need[b]);
        if let Some(a) = t {
            e.add_term(credit[&(b, a)], 1.0);
        }
        ip.add_constraint(format!("unlock_{name}"), e, Sense::Ge, 0.0);
        let Some(a) = t else { continue };
        // Entering b from a: credit toward any h up to b is at most credit up
        // to a plus the gain of b.
        for &h in &heads {
            if h == b || h == a || b == j_star {
                continue;
            }
            let e = Expr::var(credit[&(h, b)]).with_term(credit[&(h, a)], -1.0).with_term(x, credit_cap[h]);
            ip.add_constraint(format!("carry_{h}_{a}_{b}"), e, Sense::Le, model.gain[b][h] + credit_cap[h]);
        }
    }
    // Entering b from the source: credit toward h up to b is the gain of b.
    for &(t, b, x) in &arcs {
        if t.is_some() || b == j_star {
            continue;
        }
        for &h in &heads {
            if h != b {
                let e = Expr::var(credit[&(h, b)]).with_term(x, credit_cap[h]);
                ip.add_constraint(format!("start_{h}_{b}"), e, Sense::Le, model.gain[b][h] + credit_cap[h]);
            }
        }
    }
    // Credit through an unused node is zero.
    for &c in &middle {
        for &h in &heads {
            if h != c {
                let mut e = Expr::var(credit[&(h, c)]);
                for x in into(c) {
                    e.add_term(x, -credit_cap[h]);
                }
                ip.add_constraint(format!("unused_{h}_{c}"), e, Sense::Le, 0.0);
            }
        }
    }
    ip.set_objective(ObjectiveSense::Minimize, arcs.iter().fold(Expr::new(), |e, &(_, _, x)| e.with_term(x, 1.0)));
    Ok(ip)
}

/// Parameters deriving a generalization model from an instance: visiting `j`
/// raises believed reward at `j'` by `g0·exp(−d(j, j')/rho)`, capped at the
/// belief error at `j'`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainSpec {
    pub g0: f64,
    pub rho: f64,
}

/// Builds the model for provider `k` after its unprompted exploration. Base
/// credit is s̃_j·Σ_q σ(q, j) (believed reward at full audience), the
/// threshold is the best rival believed reward (equal to s̃_j·φ(j; 1)), and
/// the initial set is the set of points visited without prompting.
pub fn model_from_instance(
    inst: &EcosystemInstance,
    k: usize,
    spec: GainSpec,
) -> Result<GeneralizationModel, CoreError> {
    if !(spec.g0 >= 0.0) || spec.rho.is_nan() {
        return Err(CoreError::InvalidConfig(format!("gain spec {spec:?}")));
    }
    let start = EcosystemState::initial(inst)?;
    let run = simulate_no_prompt(inst, k, &start, 10 * inst.num_content() + 10)?;
    let state = &run.final_state;
    let n = inst.num_content();
    let believed: Vec<f64> = (0..n).map(|j| state.believed(k, j)).collect();
    let cols: Vec<f64> = (0..n).map(|j| inst.column_audience(j)).collect();
    let base: Vec<f64> = (0..n).map(|j| state.skill_belief[k][j] * cols[j]).collect();
    let threshold: Vec<f64> = (0..n)
        .map(|j| believed.iter().copied().filter(|&p| p > believed[j]).fold(0.0, f64::max))
        .collect();
    let room: Vec<f64> = (0..n).map(|j| (inst.true_skill[k][j] * cols[j] - base[j]).max(0.0)).collect();
    let gain = (0..n)
        .map(|a| {
            (0..n)
                .map(|b| {
                    if a == b || spec.rho <= 0.0 {
                        return 0.0;
                    }
                    let d = distance(&inst.content_points[a], &inst.content_points[b]);
                    (spec.g0 * (-d / spec.rho).exp()).min(room[b])
                })
                .collect()
        })
        .collect();
    GeneralizationModel::new(gain, threshold, base, run.visited())
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{min_incentive_phi, Incentive};
    use promptsim_mip::{enumerate_binaries_solve, Status};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn chain() -> GeneralizationModel {
        // 0 is visited; 1 unlocks 2; 3 is a distraction with no gain.
        let mut gain = vec![vec![0.0; 4]; 4];
        gain[0][1] = 1.0;
        gain[0][3] = 1.0;
        gain[1][2] = 1.0;
        GeneralizationModel::new(gain, vec![0.0, 1.0, 1.0, 1.0], vec![0.0; 4], vec![0]).unwrap()
    }

    pub(crate) fn random_model(rng: &mut ChaCha8Rng, n: usize) -> GeneralizationModel {
        let gain = (0..n)
            .map(|a| {
                (0..n)
                    .map(|b| if a != b && rng.random_bool(0.5) { rng.random_range(0.0..0.5) } else { 0.0 })
                    .collect()
            })
            .collect();
        let threshold = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
        let base = (0..n).map(|_| rng.random_range(0.0..0.5)).collect();
        let mut initial: Vec<usize> = (0..rng.random_range(1..=2)).map(|_| rng.random_range(0..n)).collect();
        initial.sort_unstable();
        initial.dedup();
        GeneralizationModel::new(gain, threshold, base, initial).unwrap()
    }

    fn brute_incentivizable(model: &GeneralizationModel, visited: &[usize]) -> Vec<usize> {
        (0..model.num_points())
            .filter(|&j| {
                visited.contains(&j)
                    || model.base[j] + visited.iter().map(|&v| model.gain[v][j]).sum::<f64>() >= model.threshold[j] - TOL
            })
            .collect()
    }

    fn permutations_shortest(model: &GeneralizationModel, j_star: usize) -> Option<usize> {
        let others: Vec<usize> = (0..model.num_points()).filter(|&j| j != j_star).collect();
        let mut best: Option<usize> = None;
        // Every ordered selection of distinct intermediate nodes.
        fn rec(
            model: &GeneralizationModel,
            j_star: usize,
            others: &[usize],
            prefix: &mut Vec<usize>,
            best: &mut Option<usize>,
        ) {
            let mut path = prefix.clone();
            path.push(j_star);
            if path_is_feasible(model, &path, j_star) && best.is_none_or(|b| path.len() < b) {
                *best = Some(path.len());
            }
            for &j in others {
                if !prefix.contains(&j) {
                    prefix.push(j);
                    rec(model, j_star, others, prefix, best);
                    prefix.pop();
                }
            }
        }
        rec(model, j_star, &others, &mut Vec::new(), &mut best);
        best
    }

    #[test]
    fn incentivizable_examples() {
        let m = chain();
        assert_eq!(incentivizable_set(&m, &[0, 1, 2, 3]), vec![0, 1, 2, 3]);
        assert_eq!(incentivizable_set(&m, &[0]), vec![0, 1, 3]);
        let zero = GeneralizationModel::new(vec![vec![0.0; 3]; 3], vec![0.0; 3], vec![], vec![]).unwrap();
        assert_eq!(incentivizable_set(&zero, &[]), vec![0, 1, 2]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let m = random_model(&mut rng, 6);
            let visited: Vec<usize> = (0..6).filter(|_| rng.random_bool(0.4)).collect();
            assert_eq!(incentivizable_set(&m, &visited), brute_incentivizable(&m, &visited));
        }
    }

    #[test]
    fn reachability_examples() {
        let m = chain();
        assert_eq!(is_reachable(&m, 0), (true, Some(0)));
        assert_eq!(is_reachable(&m, 2), (true, Some(2)));
        let mut blocked = chain();
        blocked.threshold[2] = 5.0;
        blocked.validate().unwrap();
        assert_eq!(is_reachable(&blocked, 2), (false, None));
        assert!(matches!(greedy_path(&blocked, 2), Err(CoreError::Unreachable(2))));
    }

    #[test]
    fn reachability_matches_subset_closure() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let m = random_model(&mut rng, 6);
            // The closure is the smallest superset of the initial set that is
            // closed under the incentivizable map.
            let closed: Vec<u32> = (0u32..64)
                .filter(|&s| m.initial_set.iter().all(|&j| s >> j & 1 == 1))
                .filter(|&s| {
                    let members: Vec<usize> = (0..6).filter(|&j| s >> j & 1 == 1).collect();
                    brute_incentivizable(&m, &members) == members
                })
                .collect();
            let least = closed.iter().fold(63u32, |acc, &s| acc & s);
            for j in 0..6 {
                assert_eq!(is_reachable(&m, j).0, least >> j & 1 == 1);
            }
        }
    }

    #[test]
    fn closure_is_monotone_and_superadditive() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let m = random_model(&mut rng, 7);
            let a: Vec<usize> = (0..7).filter(|_| rng.random_bool(0.3)).collect();
            let b: Vec<usize> = (0..7).filter(|_| rng.random_bool(0.3)).collect();
            let mut union = a.clone();
            union.extend(&b);
            union.sort_unstable();
            union.dedup();
            let iu = incentivizable_set(&m, &union);
            for j in incentivizable_set(&m, &a).into_iter().chain(incentivizable_set(&m, &b)) {
                assert!(iu.contains(&j));
            }
            let mut current = m.initial_set.clone();
            for _ in 0..7 {
                let next = incentivizable_set(&m, &current);
                assert!(current.iter().all(|j| next.contains(j)));
                current = next;
            }
            assert_eq!(incentivizable_set(&m, &current), current);
        }
    }

    #[test]
    fn greedy_examples() {
        let m = chain();
        assert_eq!(greedy_path(&m, 1).unwrap().nodes, vec![1]);
        let p = greedy_path(&m, 2).unwrap();
        assert_eq!(p.nodes, vec![1, 2]);
        assert!(p.feasible);
        assert_eq!(exact_shortest_path(&m, 2, 12).unwrap().nodes, vec![1, 2]);
        assert_eq!(serde_json::to_string(&p).unwrap(), "[1,2]");
    }

    #[test]
    fn exact_search_matches_permutations() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..300 {
            let m = random_model(&mut rng, 6);
            let j_star = rng.random_range(0..6);
            let brute = permutations_shortest(&m, j_star);
            match exact_shortest_path(&m, j_star, 12) {
                Ok(p) => {
                    assert!(p.feasible);
                    assert_eq!(Some(p.len()), brute);
                    assert!(p.len() <= greedy_path(&m, j_star).unwrap().len());
                }
                Err(CoreError::Unreachable(_)) => assert_eq!(brute, None),
                Err(e) => panic!("{e}"),
            }
        }
        let big = random_model(&mut rng, 13);
        assert!(matches!(exact_shortest_path(&big, 0, 12), Err(CoreError::TooLarge { .. })));
    }

    #[test]
    fn greedy_bound_needs_threshold_above_gains() {
        // Gains toward the target exceed its threshold, so r/w_min < 1 and
        // the bound would fall below the optimum itself.
        let mut gain = vec![vec![0.0; 4]; 4];
        gain[0][1] = 1.0;
        gain[1][3] = 2.0;
        gain[2][3] = 1.5;
        gain[0][2] = 1.0;
        let m = GeneralizationModel::new(gain, vec![0.0, 1.0, 1.0, 1.0], vec![0.0; 4], vec![0]).unwrap();
        let opt = exact_shortest_path(&m, 3, 12).unwrap();
        assert_eq!(opt.len(), 2);
        let factor = greedy_bound_factor(&m, &opt, 3);
        assert!(factor < 1.0);
        assert!((greedy_path(&m, 3).unwrap().len() as f64) > factor * opt.len() as f64);
    }

    #[test]
    fn two_node_ip_shape() {
        let mut gain = vec![vec![0.0; 2]; 2];
        gain[0][1] = 1.0;
        let m = GeneralizationModel::new(gain, vec![0.0, 1.0], vec![0.0; 2], vec![0]).unwrap();
        let ip = build_shortest_path_ip(&m, 1, PathIpOptions::default()).unwrap();
        assert_eq!(ip.num_vars(), 1);
        assert_eq!(ip.constraints.len(), 3);
        let sol = enumerate_binaries_solve(&ip, 24).unwrap();
        assert_eq!(sol.objective, 1.0);
    }

    #[test]
    fn ip_infeasible_when_unreachable() {
        let mut m = chain();
        m.threshold[2] = 5.0;
        m.validate().unwrap();
        let ip = build_shortest_path_ip(&m, 2, PathIpOptions::default()).unwrap();
        assert_eq!(enumerate_binaries_solve(&ip, 24).unwrap().status, Status::Infeasible);
    }

    #[test]
    fn ip_optimum_matches_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in [3, 4, 5, 6] {
            for _ in 0..25 {
                let m = random_model(&mut rng, n);
                let j_star = rng.random_range(0..n);
                let ip = build_shortest_path_ip(&m, j_star, PathIpOptions::default()).unwrap();
                let sol = enumerate_binaries_solve(&ip, 24).unwrap();
                match exact_shortest_path(&m, j_star, 12) {
                    Ok(p) => {
                        assert_eq!(sol.status, Status::Optimal);
                        assert!((sol.objective - p.len() as f64).abs() < 1e-6, "{} vs {:?}", sol.objective, p);
                    }
                    Err(_) => assert_eq!(sol.status, Status::Infeasible),
                }
            }
        }
    }

    /// A shortest path that must step down a level: restricting arcs to
    /// equal or consecutive levels makes the program longer than the optimum.
    #[test]
    fn level_restriction_can_lengthen_paths() {
        // 0 visited; y=1 (level 1), z=2 needs y (level 2), u=3 needs z
        // (level 3), x=4 (level 1), v=5 needs x or u (level 2), target 6
        // needs both u and v.
        let mut gain = vec![vec![0.0; 7]; 7];
        gain[0][1] = 1.0;
        gain[0][4] = 1.0;
        gain[1][2] = 1.0;
        gain[2][3] = 1.0;
        gain[4][5] = 1.0;
        gain[3][5] = 1.0;
        gain[3][6] = 0.5;
        gain[5][6] = 0.5;
        let m = GeneralizationModel::new(gain, vec![0.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0], vec![0.0; 7], vec![0]).unwrap();
        assert_eq!(m.level, vec![Some(0), Some(1), Some(2), Some(3), Some(1), Some(2), Some(4)]);
        let opt = exact_shortest_path(&m, 6, 12).unwrap();
        assert_eq!(opt.nodes, vec![1, 2, 3, 5, 6]);
        let restricted = build_shortest_path_ip(&m, 6, PathIpOptions { level_restricted: true }).unwrap();
        let sol = enumerate_binaries_solve(&restricted, 24).unwrap();
        assert_eq!(sol.objective, 6.0);
    }

    fn line_instance(skill_belief: Vec<f64>, audience: Vec<f64>) -> EcosystemInstance {
        let n = skill_belief.len();
        EcosystemInstance {
            content_points: (0..n).map(|j| vec![j as f64]).collect(),
            users: vec![vec![0.0]],
            affinity: vec![vec![1.0; n]],
            true_skill: vec![vec![0.9; n]],
            initial_skill_belief: vec![skill_belief],
            initial_audience_belief: vec![audience],
            initial_trust: vec![0.0],
            learning_rate: vec![0.5],
            sigma_max: 1.0,
            seed: 0,
            meta: serde_json::Value::Null,
        }
    }

    #[test]
    fn thresholds_match_minimum_incentive() {
        let inst = line_instance(vec![0.9, 0.2, 0.5, 0.05], vec![0.8, 1.0, 0.3, 1.0]);
        let m = model_from_instance(&inst, 0, GainSpec { g0: 0.3, rho: 1.0 }).unwrap();
        let run = simulate_no_prompt(&inst, 0, &EcosystemState::initial(&inst).unwrap(), 10).unwrap();
        let st = &run.final_state;
        assert_eq!(m.initial_set, run.visited());
        for j in 0..4 {
            let expected = match min_incentive_phi(j, 1.0, &st.skill_belief[0], &st.audience_belief[0]).unwrap() {
                Incentive::Commitment(c) => st.skill_belief[0][j] * c,
                Incentive::NoIncentiveNeeded => 0.0,
            };
            assert!((m.threshold[j] - expected).abs() < 1e-12);
        }
        // Gains never push belief past the truth.
        for b in 0..4 {
            for a in 0..4 {
                assert!(m.base[b] + m.gain[a][b] <= inst.true_skill[0][b] * 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn degenerate_gain_specs() {
        let inst = line_instance(vec![0.9, 0.2, 0.5, 0.05], vec![0.8, 1.0, 0.3, 1.0]);
        let local = model_from_instance(&inst, 0, GainSpec { g0: 1.0, rho: 1e-9 }).unwrap();
        assert!(local.gain.iter().flatten().all(|&w| w == 0.0));
        let none = model_from_instance(&inst, 0, GainSpec { g0: 0.0, rho: 1.0 }).unwrap();
        let first = incentivizable_set(&none, &none.initial_set);
        for j in 0..4 {
            assert_eq!(is_reachable(&none, j).0, first.contains(&j));
        }
        assert!(!is_reachable(&none, 3).0);
    }
}
