//! Model construction. Stage `t` decisions: locations `act`, prompts `nu`
//! with commitments `c` that take effect at `t + 1`, and the matching `pi`.

use std::fmt;
use std::str::FromStr;

use promptsim_core::EcosystemInstance;
use promptsim_mip::{Expr, MipModel, ObjectiveSense, Sense, VarId};
use serde::{Deserialize, Serialize};

use crate::JointError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyClass {
    Prompting,
    /// No prompts; the matching may change every stage.
    NoPromptAdaptive,
    /// No prompts and one matching for the whole horizon.
    Stationary,
}

impl PolicyClass {
    pub const ALL: [PolicyClass; 3] = [PolicyClass::Prompting, PolicyClass::NoPromptAdaptive, PolicyClass::Stationary];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyClass::Prompting => "prompting",
            PolicyClass::NoPromptAdaptive => "no_prompt_adaptive",
            PolicyClass::Stationary => "stationary",
        }
    }

    pub fn allows_prompts(self) -> bool {
        self == PolicyClass::Prompting
    }
}

impl fmt::Display for PolicyClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyClass {
    type Err = JointError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PolicyClass::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| JointError::InconsistentSpec(format!("unknown policy class {s:?}")))
    }
}

/// Big-M constants per constraint family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BigM {
    /// Bounds audiences and commitments: Σ_q max_j σ(q, j).
    pub audience: f64,
    /// Bounds provider utility; equal to `audience` since skills are at most 1.
    pub utility: f64,
    /// Bounds audience beliefs and believed rewards: max_j Σ_q σ(q, j).
    pub belief: f64,
}

pub fn big_m(inst: &EcosystemInstance) -> BigM {
    let audience = inst.audience_cap();
    let belief = (0..inst.num_content()).map(|j| inst.column_audience(j)).fold(0.0, f64::max);
    BigM { audience, utility: audience, belief }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointMipSpec {
    pub instance: EcosystemInstance,
    pub horizon: usize,
    pub policy_class: PolicyClass,
    pub big_m: BigM,
}

impl JointMipSpec {
    pub fn new(instance: EcosystemInstance, horizon: usize, policy_class: PolicyClass) -> Self {
        let big_m = big_m(&instance);
        JointMipSpec { instance, horizon, policy_class, big_m }
    }

    pub fn validate(&self) -> Result<(), JointError> {
        self.instance.validate()?;
        if self.horizon == 0 {
            return Err(JointError::InconsistentSpec("horizon must be at least 1".into()));
        }
        if self.instance.num_providers() == 0 || self.instance.num_users() == 0 {
            return Err(JointError::InconsistentSpec("need at least one provider and one user".into()));
        }
        let need = big_m(&self.instance);
        let m = self.big_m;
        let short = [("audience", m.audience, need.audience), ("utility", m.utility, need.utility), ("belief", m.belief, need.belief)]
            .into_iter()
            .find(|&(_, have, need)| !(have >= need - 1e-12) || !have.is_finite());
        if let Some((family, have, need)) = short {
            return Err(JointError::InconsistentSpec(format!("big-M {family} = {have} is below the bound {need}")));
        }
        Ok(())
    }
}

/// Variable ids, indexed `[k][j][t]`, `[q][k][t]` or `[k][t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointVars {
    pub act: Vec<Vec<Vec<VarId>>>,
    pub nu: Vec<Vec<Vec<VarId>>>,
    pub vis: Vec<Vec<Vec<VarId>>>,
    pub commitment: Vec<Vec<Vec<VarId>>>,
    pub skill_belief: Vec<Vec<Vec<VarId>>>,
    pub audience_belief: Vec<Vec<Vec<VarId>>>,
    pub pi: Vec<Vec<Vec<VarId>>>,
    pub utility: Vec<Vec<VarId>>,
    pub audience: Vec<Vec<VarId>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointMip {
    pub model: MipModel,
    pub vars: JointVars,
}

/// `joint_{instance}_{class}_{T}.lp`
pub fn lp_file_name(instance_name: &str, class: PolicyClass, horizon: usize) -> String {
    format!("joint_{instance_name}_{class}_{horizon}.lp")
}

type Grid = Vec<Vec<Vec<VarId>>>;

fn grid(
    model: &mut MipModel,
    dims: (usize, usize, usize),
    mut add: impl FnMut(&mut MipModel, usize, usize, usize) -> Result<VarId, JointError>,
) -> Result<Grid, JointError> {
    (0..dims.0)
        .map(|a| (0..dims.1).map(|b| (0..dims.2).map(|t| add(&mut *model, a, b, t)).collect()).collect())
        .collect()
}

/// Builds the program. Products (π·Act, C·Act, Vis·ã) are kept as bilinear
/// terms; see [`crate::linearize`].
pub fn build_joint_mip(spec: &JointMipSpec) -> Result<JointMip, JointError> {
    spec.validate()?;
    let inst = &spec.instance;
    let (nk, nj, nq, nt) = (inst.num_providers(), inst.num_content(), inst.num_users(), spec.horizon);
    let m = spec.big_m;
    let prompts = spec.policy_class.allows_prompts();
    let mut model = MipModel::new(format!("joint_{}_{}", spec.policy_class, nt), ObjectiveSense::Maximize);
    model.metadata.insert("policy_class".into(), spec.policy_class.to_string());
    model.metadata.insert("horizon".into(), nt.to_string());
    model.metadata.insert("big_m_audience".into(), m.audience.to_string());
    model.metadata.insert("big_m_belief".into(), m.belief.to_string());

    let act = grid(&mut model, (nk, nj, nt), |md, k, j, t| Ok(md.add_binary(format!("act_k{k}_j{j}_t{t}"))?))?;
    let nu = grid(&mut model, (nk, nj, nt), |md, k, j, t| {
        let v = md.add_binary(format!("nu_k{k}_j{j}_t{t}"))?;
        if !prompts {
            md.var_mut(v).upper = 0.0;
        }
        Ok(v)
    })?;
    let vis = grid(&mut model, (nk, nj, nt), |md, k, j, t| Ok(md.add_binary(format!("vis_k{k}_j{j}_t{t}"))?))?;
    let pi = grid(&mut model, (nq, nk, nt), |md, q, k, t| Ok(md.add_continuous(format!("pi_q{q}_k{k}_t{t}"), 0.0, 1.0)?))?;
    let commitment = grid(&mut model, (nk, nj, nt), |md, k, j, t| {
        let hi = if prompts { m.audience } else { 0.0 };
        Ok(md.add_continuous(format!("c_k{k}_j{j}_t{t}"), 0.0, hi)?)
    })?;
    let mut utility = Vec::with_capacity(nk);
    let mut audience = Vec::with_capacity(nk);
    for k in 0..nk {
        let e = (0..nt).map(|t| model.add_continuous(format!("e_k{k}_t{t}"), 0.0, m.utility)).collect::<Result<Vec<_>, _>>()?;
        let a = (0..nt).map(|t| model.add_continuous(format!("aud_k{k}_t{t}"), 0.0, m.audience)).collect::<Result<Vec<_>, _>>()?;
        utility.push(e);
        audience.push(a);
    }
    let skill_belief = grid(&mut model, (nk, nj, nt), |md, k, j, t| {
        let s0 = inst.initial_skill_belief[k][j];
        let (lo, hi) = if t == 0 { (s0, s0) } else { (0.0, 1.0) };
        Ok(md.add_continuous(format!("sb_k{k}_j{j}_t{t}"), lo, hi)?)
    })?;
    let audience_belief = grid(&mut model, (nk, nj, nt), |md, k, j, t| {
        let a0 = inst.initial_audience_belief[k][j];
        let (lo, hi) = if t == 0 { (a0, a0) } else { (0.0, inst.column_audience(j)) };
        Ok(md.add_continuous(format!("ab_k{k}_j{j}_t{t}"), lo, hi)?)
    })?;

    let mut objective = Expr::new();
    for row in &utility {
        for &e in row {
            objective.add_term(e, 1.0 / nt as f64);
        }
    }
    model.set_objective(ObjectiveSense::Maximize, objective);

    // Believed reward s̃ᵗ·ãᵗ with s̃ᵗ = s̃⁰ + (s* − s̃⁰)·Vis^{t−1} substituted.
    let believed = |k: usize, j: usize, t: usize| {
        let s0 = inst.initial_skill_belief[k][j];
        let e = Expr::new().with_term(audience_belief[k][j][t], s0);
        if t == 0 {
            e
        } else {
            e.with_product(vis[k][j][t - 1], audience_belief[k][j][t], inst.true_skill[k][j] - s0)
        }
    };

    for k in 0..nk {
        for t in 0..nt {
            for j in 0..nj {
                model.add_constraint(
                    format!("c1a_k{k}_j{j}_t{t}"),
                    Expr::new().with_term(commitment[k][j][t], 1.0).with_term(nu[k][j][t], -m.audience),
                    Sense::Le,
                    0.0,
                );
                if t >= 1 {
                    model.add_constraint(
                        format!("c1b_k{k}_j{j}_t{t}"),
                        Expr::new().with_term(audience[k][t], 1.0).with_product(act[k][j][t], commitment[k][j][t - 1], -1.0),
                        Sense::Ge,
                        0.0,
                    );
                }
                for jp in (0..nj).filter(|&jp| jp != j) {
                    let mut e = believed(k, j, t);
                    let rival = believed(k, jp, t);
                    for &(v, c) in &rival.terms {
                        e.add_term(v, -c);
                    }
                    for &(a, b, c) in &rival.products {
                        e.add_product(a, b, -c);
                    }
                    e.add_term(act[k][j][t], -m.belief);
                    model.add_constraint(format!("c2_k{k}_j{j}_jp{jp}_t{t}"), e, Sense::Ge, -m.belief);
                }
                if t >= 1 {
                    let ab = audience_belief[k][j][t];
                    let (a_prev, nu_prev) = (act[k][j][t - 1], nu[k][j][t - 1]);
                    let realized = Expr::new().with_term(ab, 1.0).with_term(audience[k][t - 1], -1.0);
                    model.add_constraint(
                        format!("c3u_k{k}_j{j}_t{t}"),
                        realized.clone().with_term(a_prev, m.audience).with_term(nu_prev, -m.audience),
                        Sense::Le,
                        m.audience,
                    );
                    model.add_constraint(
                        format!("c3l_k{k}_j{j}_t{t}"),
                        realized.with_term(a_prev, -m.audience).with_term(nu_prev, m.audience),
                        Sense::Ge,
                        -m.audience,
                    );
                    let persist = Expr::new().with_term(ab, 1.0).with_term(audience_belief[k][j][t - 1], -1.0);
                    model.add_constraint(
                        format!("c4u_k{k}_j{j}_t{t}"),
                        persist.clone().with_term(a_prev, -m.belief).with_term(nu_prev, -m.belief),
                        Sense::Le,
                        0.0,
                    );
                    model.add_constraint(
                        format!("c4l_k{k}_j{j}_t{t}"),
                        persist.with_term(a_prev, m.belief).with_term(nu_prev, m.belief),
                        Sense::Ge,
                        0.0,
                    );
                    let promised = Expr::new().with_term(ab, 1.0).with_term(commitment[k][j][t - 1], -1.0);
                    model.add_constraint(
                        format!("c5u_k{k}_j{j}_t{t}"),
                        promised.clone().with_term(nu_prev, m.audience),
                        Sense::Le,
                        m.audience,
                    );
                    model.add_constraint(
                        format!("c5l_k{k}_j{j}_t{t}"),
                        promised.with_term(nu_prev, -m.audience),
                        Sense::Ge,
                        -m.audience,
                    );
                    let s0 = inst.initial_skill_belief[k][j];
                    model.add_constraint(
                        format!("c8_k{k}_j{j}_t{t}"),
                        Expr::new()
                            .with_term(skill_belief[k][j][t], 1.0)
                            .with_term(vis[k][j][t - 1], -(inst.true_skill[k][j] - s0)),
                        Sense::Eq,
                        s0,
                    );
                }
                // Vis is the running maximum of Act, from stage 0 on.
                let mut running = Expr::new().with_term(vis[k][j][t], 1.0);
                for tp in 0..=t {
                    model.add_constraint(
                        format!("c9a_k{k}_j{j}_t{t}_tp{tp}"),
                        Expr::new().with_term(vis[k][j][t], 1.0).with_term(act[k][j][tp], -1.0),
                        Sense::Ge,
                        0.0,
                    );
                    running.add_term(act[k][j][tp], -1.0);
                }
                model.add_constraint(format!("c9b_k{k}_j{j}_t{t}"), running, Sense::Le, 0.0);
            }
            let mut welfare = Expr::new().with_term(utility[k][t], 1.0);
            let mut reach = Expr::new().with_term(audience[k][t], 1.0);
            for (q, sigma) in inst.affinity.iter().enumerate() {
                for j in 0..nj {
                    welfare.add_product(act[k][j][t], pi[q][k][t], -inst.true_skill[k][j] * sigma[j]);
                    reach.add_product(act[k][j][t], pi[q][k][t], -sigma[j]);
                }
            }
            model.add_constraint(format!("c6_k{k}_t{t}"), welfare, Sense::Eq, 0.0);
            model.add_constraint(format!("c7_k{k}_t{t}"), reach, Sense::Eq, 0.0);
            let one_location = (0..nj).fold(Expr::new(), |e, j| e.with_term(act[k][j][t], 1.0));
            model.add_constraint(format!("c10_k{k}_t{t}"), one_location, Sense::Eq, 1.0);
            let one_prompt = (0..nj).fold(Expr::new(), |e, j| e.with_term(nu[k][j][t], 1.0));
            model.add_constraint(format!("c12_k{k}_t{t}"), one_prompt, Sense::Le, 1.0);
        }
    }
    for q in 0..nq {
        for t in 0..nt {
            let row = (0..nk).fold(Expr::new(), |e, k| e.with_term(pi[q][k][t], 1.0));
            model.add_constraint(format!("c11_q{q}_t{t}"), row, Sense::Eq, 1.0);
            if spec.policy_class == PolicyClass::Stationary && t >= 1 {
                for k in 0..nk {
                    model.add_constraint(
                        format!("fixed_matching_q{q}_k{k}_t{t}"),
                        Expr::new().with_term(pi[q][k][t], 1.0).with_term(pi[q][k][0], -1.0),
                        Sense::Eq,
                        0.0,
                    );
                }
            }
        }
    }

    Ok(JointMip {
        model,
        vars: JointVars { act, nu, vis, commitment, skill_belief, audience_belief, pi, utility, audience },
    })
}
