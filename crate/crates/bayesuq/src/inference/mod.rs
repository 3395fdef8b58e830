//! Joint-distribution algebra, conditioning into posteriors (Bayes'
//! theorem), point estimation and automatic sampler selection.

mod conjugacy;
mod optimize;
mod select;
mod structure;

pub use conjugacy::{detect_conjugacy, Conjugacy, GammaConditional, PrecisionDependent};
pub use optimize::{map_estimate, ml_estimate, OptimizeOptions};
pub use select::{select_sampler, SamplerKind, SamplingPlan};
pub use structure::{LinearGaussianTarget, LmrfGaussianTarget, SqrtPrec};

use crate::distributions::{DistKind, Distribution, MeanParam};
use crate::error::{Error, Result};
use crate::geometry::Geometry;
use std::collections::{HashMap, HashSet};
use std::sync::Arc;

pub type Assignment = HashMap<String, Vec<f64>>;

pub type NodeFn = Arc<dyn Fn(&Assignment) -> Vec<f64> + Send + Sync>;
/// `vjp(values, parent, v)` returns `vᵀ ∂f/∂parent` for gradient
/// accumulation through a deterministic node.
pub type NodeVjp = Arc<dyn Fn(&Assignment, &str, &[f64]) -> Vec<f64> + Send + Sync>;

/// A named pure function of other variables inside a joint distribution,
/// e.g. `x = u + t * x'`.
#[derive(Clone)]
pub struct DeterministicNode {
    name: String,
    deps: Vec<String>,
    dim: usize,
    f: NodeFn,
    vjp: Option<NodeVjp>,
}

impl DeterministicNode {
    pub fn new(
        name: impl Into<String>,
        deps: Vec<String>,
        dim: usize,
        f: NodeFn,
        vjp: Option<NodeVjp>,
    ) -> Self {
        DeterministicNode {
            name: name.into(),
            deps,
            dim,
            f,
            vjp,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }
}

impl std::fmt::Debug for DeterministicNode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} = f({})", self.name, self.deps.join(", "))
    }
}

/// Product of named component densities plus deterministic nodes, with a
/// validated acyclic dependency graph.
#[derive(Debug, Clone)]
pub struct JointDistribution {
    components: Vec<Distribution>,
    nodes: Vec<DeterministicNode>,
    /// Node evaluation order (indices into `nodes`).
    node_order: Vec<usize>,
}

impl JointDistribution {
    pub fn new(components: Vec<Distribution>) -> Result<Self> {
        Self::with_deterministic(components, Vec::new())
    }

    pub fn with_deterministic(
        components: Vec<Distribution>,
        nodes: Vec<DeterministicNode>,
    ) -> Result<Self> {
        let mut names = HashSet::new();
        for c in &components {
            if !names.insert(c.name().to_string()) {
                return Err(Error::invalid(format!("duplicate variable '{}'", c.name())));
            }
        }
        for n in &nodes {
            if !names.insert(n.name.clone()) {
                return Err(Error::invalid(format!("duplicate variable '{}'", n.name)));
            }
        }
        // Every conditioning variable must resolve to a component or node.
        for c in &components {
            for dep in c.conditioning_variables() {
                if !names.contains(&dep) {
                    return Err(Error::UnknownVariable {
                        name: dep,
                        valid: names.iter().cloned().collect(),
                    });
                }
            }
        }
        for n in &nodes {
            for dep in &n.deps {
                if !names.contains(dep) {
                    return Err(Error::UnknownVariable {
                        name: dep.clone(),
                        valid: names.iter().cloned().collect(),
                    });
                }
            }
        }
        let node_order = toposort_nodes(&components, &nodes)?;
        Ok(JointDistribution {
            components,
            nodes,
            node_order,
        })
    }

    pub fn components(&self) -> &[Distribution] {
        &self.components
    }

    pub fn component(&self, name: &str) -> Option<&Distribution> {
        self.components.iter().find(|c| c.name() == name)
    }

    pub fn nodes(&self) -> &[DeterministicNode] {
        &self.nodes
    }

    pub fn variable_names(&self) -> Vec<String> {
        self.components.iter().map(|c| c.name().to_string()).collect()
    }

    /// Textual factorization, e.g. `p(y,x) = p(y|x)p(x)`.
    pub fn factorization(&self) -> String {
        let all: Vec<&str> = self.components.iter().map(|c| c.name()).collect();
        let mut rhs = String::new();
        for c in &self.components {
            let deps = c.conditioning_variables();
            if deps.is_empty() {
                rhs.push_str(&format!("p({})", c.name()));
            } else {
                rhs.push_str(&format!("p({}|{})", c.name(), deps.join(",")));
            }
        }
        format!("p({}) = {}", all.join(","), rhs)
    }

    /// Evaluate all deterministic nodes given values for the stochastic
    /// variables, returning the extended assignment.
    fn resolve_nodes(&self, assignment: &Assignment) -> Result<Assignment> {
        let mut all = assignment.clone();
        for &idx in &self.node_order {
            let node = &self.nodes[idx];
            for dep in &node.deps {
                if !all.contains_key(dep) {
                    return Err(Error::invalid(format!(
                        "deterministic node '{}' needs variable '{dep}'",
                        node.name
                    )));
                }
            }
            let v = (node.f)(&all);
            if v.len() != node.dim {
                return Err(Error::dim(
                    format!("deterministic node '{}'", node.name),
                    node.dim,
                    v.len(),
                ));
            }
            all.insert(node.name.clone(), v);
        }
        Ok(all)
    }

    /// Sum of component log-densities after resolving deterministic nodes.
    /// The assignment must cover every stochastic variable.
    pub fn logpdf(&self, assignment: &Assignment) -> Result<f64> {
        let all = self.resolve_nodes(assignment)?;
        let mut lp = 0.0;
        for c in &self.components {
            let value = all.get(c.name()).ok_or_else(|| Error::UnknownVariable {
                name: c.name().to_string(),
                valid: self.variable_names(),
            })?;
            let resolved = c.condition_unchecked(&all)?;
            lp += resolved.logpdf(value)?;
            if lp == f64::NEG_INFINITY {
                return Ok(f64::NEG_INFINITY);
            }
        }
        Ok(lp)
    }

    /// Condition on observed data, producing the posterior over the
    /// remaining variables.
    pub fn condition(&self, data: &[(&str, Vec<f64>)]) -> Result<Posterior> {
        let mut map = HashMap::new();
        for (name, value) in data {
            map.insert(name.to_string(), value.clone());
        }
        Posterior::new(self.clone(), map)
    }
}

fn toposort_nodes(
    components: &[Distribution],
    nodes: &[DeterministicNode],
) -> Result<Vec<usize>> {
    // Kahn over the full name graph to reject cycles, then extract node order.
    let mut edges: HashMap<String, Vec<String>> = HashMap::new(); // dep -> dependents
    let mut indeg: HashMap<String, usize> = HashMap::new();
    for c in components {
        indeg.entry(c.name().to_string()).or_insert(0);
        for dep in c.conditioning_variables() {
            edges.entry(dep).or_default().push(c.name().to_string());
            *indeg.entry(c.name().to_string()).or_insert(0) += 1;
        }
    }
    for n in nodes {
        indeg.entry(n.name.clone()).or_insert(0);
        for dep in &n.deps {
            edges.entry(dep.clone()).or_default().push(n.name.clone());
            *indeg.entry(n.name.clone()).or_insert(0) += 1;
        }
    }
    let mut queue: Vec<String> = indeg
        .iter()
        .filter(|(_, &d)| d == 0)
        .map(|(k, _)| k.clone())
        .collect();
    queue.sort();
    let mut order = Vec::new();
    while let Some(name) = queue.pop() {
        order.push(name.clone());
        if let Some(dependents) = edges.get(&name) {
            for d in dependents.clone() {
                let e = indeg.get_mut(&d).expect("known node");
                *e -= 1;
                if *e == 0 {
                    queue.push(d);
                }
            }
        }
    }
    if order.len() != indeg.len() {
        return Err(Error::invalid("dependency graph contains a cycle"));
    }
    let node_names: Vec<&str> = order
        .iter()
        .map(|s| s.as_str())
        .filter(|n| nodes.iter().any(|node| node.name == *n))
        .collect();
    Ok(node_names
        .iter()
        .map(|n| nodes.iter().position(|node| node.name == *n).expect("present"))
        .collect())
}

/// A joint distribution conditioned on observed data: the sampling target.
#[derive(Debug, Clone)]
pub struct Posterior {
    joint: JointDistribution,
    data: Assignment,
    targets: Vec<String>,
    /// Indices of components that involve at least one target variable.
    active: Vec<usize>,
}

impl Posterior {
    pub fn new(joint: JointDistribution, data: Assignment) -> Result<Self> {
        for (name, value) in &data {
            match joint.component(name) {
                None => {
                    return Err(Error::UnknownVariable {
                        name: name.clone(),
                        valid: joint.variable_names(),
                    })
                }
                Some(c) => {
                    if c.par_dim() != value.len() {
                        return Err(Error::dim(
                            format!("data for '{name}'"),
                            c.par_dim(),
                            value.len(),
                        ));
                    }
                }
            }
        }
        let targets: Vec<String> = joint
            .components
            .iter()
            .map(|c| c.name().to_string())
            .filter(|n| !data.contains_key(n))
            .collect();
        if targets.is_empty() {
            return Err(Error::invalid(
                "conditioning on every variable leaves nothing to infer",
            ));
        }

        // A name "reaches a target" if it is a target, or a deterministic
        // node with a target-reaching dependency.
        let mut reaches: HashSet<String> = targets.iter().cloned().collect();
        loop {
            let mut changed = false;
            for n in &joint.nodes {
                if !reaches.contains(&n.name) && n.deps.iter().any(|d| reaches.contains(d)) {
                    reaches.insert(n.name.clone());
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        let active = joint
            .components
            .iter()
            .enumerate()
            .filter(|(_, c)| {
                reaches.contains(c.name())
                    || c.conditioning_variables().iter().any(|d| reaches.contains(d))
            })
            .map(|(i, _)| i)
            .collect();

        Ok(Posterior {
            joint,
            data,
            targets,
            active,
        })
    }

    pub fn joint(&self) -> &JointDistribution {
        &self.joint
    }

    pub fn data(&self) -> &Assignment {
        &self.data
    }

    pub fn targets(&self) -> &[String] {
        &self.targets
    }

    pub fn is_target(&self, name: &str) -> bool {
        self.targets.iter().any(|t| t == name)
    }

    pub fn component(&self, name: &str) -> Result<&Distribution> {
        self.joint.component(name).ok_or_else(|| Error::UnknownVariable {
            name: name.to_string(),
            valid: self.joint.variable_names(),
        })
    }

    pub fn target_geometry(&self, name: &str) -> Result<&Geometry> {
        Ok(self.component(name)?.geometry())
    }

    pub fn target_dim(&self, name: &str) -> Result<usize> {
        Ok(self.component(name)?.par_dim())
    }

    pub fn total_target_dim(&self) -> usize {
        self.targets
            .iter()
            .map(|t| self.component(t).map(|c| c.par_dim()).unwrap_or(0))
            .sum()
    }

    fn full_assignment(&self, assignment: &Assignment) -> Result<Assignment> {
        let mut full = assignment.clone();
        for (k, v) in &self.data {
            full.insert(k.clone(), v.clone());
        }
        self.joint.resolve_nodes(&full)
    }

    /// Active components: those whose density depends on a target variable.
    pub(crate) fn active_components(&self) -> impl Iterator<Item = &Distribution> {
        self.active.iter().map(|&i| &self.joint.components[i])
    }

    /// Posterior log-density at a target assignment (up to the constant from
    /// components that involve only data). Evaluation failures inside the
    /// target's support boundary (e.g. a forward model rejecting the point)
    /// count as zero probability.
    pub fn log_density(&self, assignment: &Assignment) -> Result<f64> {
        for t in &self.targets {
            if !assignment.contains_key(t) {
                return Err(Error::UnknownVariable {
                    name: t.clone(),
                    valid: assignment.keys().cloned().collect(),
                });
            }
        }
        let all = match self.full_assignment(assignment) {
            Ok(all) => all,
            Err(Error::Evaluation(_)) => return Ok(f64::NEG_INFINITY),
            Err(e) => return Err(e),
        };
        let mut lp = 0.0;
        for c in self.active_components() {
            let value = all.get(c.name()).ok_or_else(|| Error::UnknownVariable {
                name: c.name().to_string(),
                valid: self.joint.variable_names(),
            })?;
            let term = c
                .condition_unchecked(&all)
                .and_then(|resolved| resolved.logpdf(value));
            match term {
                Ok(v) => lp += v,
                Err(Error::Evaluation(_)) => return Ok(f64::NEG_INFINITY),
                Err(e) => return Err(e),
            }
            if lp == f64::NEG_INFINITY {
                return Ok(f64::NEG_INFINITY);
            }
        }
        Ok(lp)
    }

    /// Log-likelihood only: the sum over data components that depend on
    /// targets.
    pub fn log_likelihood(&self, assignment: &Assignment) -> Result<f64> {
        let all = match self.full_assignment(assignment) {
            Ok(all) => all,
            Err(Error::Evaluation(_)) => return Ok(f64::NEG_INFINITY),
            Err(e) => return Err(e),
        };
        let mut lp = 0.0;
        for c in self.active_components() {
            if !self.data.contains_key(c.name()) {
                continue;
            }
            let value = &all[c.name()];
            match c
                .condition_unchecked(&all)
                .and_then(|resolved| resolved.logpdf(value))
            {
                Ok(v) => lp += v,
                Err(Error::Evaluation(_)) => return Ok(f64::NEG_INFINITY),
                Err(e) => return Err(e),
            }
        }
        Ok(lp)
    }

    /// Posterior log-density excluding one named component; pCN uses this as
    /// the acceptance term with the Gaussian prior left invariant.
    pub fn log_density_excluding(&self, excluded: &str, assignment: &Assignment) -> Result<f64> {
        let all = match self.full_assignment(assignment) {
            Ok(all) => all,
            Err(Error::Evaluation(_)) => return Ok(f64::NEG_INFINITY),
            Err(e) => return Err(e),
        };
        let mut lp = 0.0;
        for c in self.active_components() {
            if c.name() == excluded {
                continue;
            }
            let value = &all[c.name()];
            match c
                .condition_unchecked(&all)
                .and_then(|resolved| resolved.logpdf(value))
            {
                Ok(v) => lp += v,
                Err(Error::Evaluation(_)) => return Ok(f64::NEG_INFINITY),
                Err(e) => return Err(e),
            }
        }
        Ok(lp)
    }

    /// Gradient of the log-density with respect to the named variables,
    /// others held fixed. Variables with non-differentiable conditionals or
    /// unreachable derivative information produce a capability error.
    pub fn grad_log_density_for(
        &self,
        vars: &[String],
        assignment: &Assignment,
    ) -> Result<Assignment> {
        // Names whose cotangents matter: requested vars plus deterministic
        // nodes reachable from them.
        let mut tracked: HashSet<String> = vars.iter().cloned().collect();
        loop {
            let mut changed = false;
            for n in &self.joint.nodes {
                if !tracked.contains(&n.name) && n.deps.iter().any(|d| tracked.contains(d)) {
                    tracked.insert(n.name.clone());
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }

        let all = self.full_assignment(assignment)?;
        let mut cot: HashMap<String, Vec<f64>> = HashMap::new();
        let mut add = |cot: &mut HashMap<String, Vec<f64>>, name: &str, v: Vec<f64>| {
            match cot.get_mut(name) {
                Some(acc) => {
                    for (a, b) in acc.iter_mut().zip(&v) {
                        *a += b;
                    }
                }
                None => {
                    cot.insert(name.to_string(), v);
                }
            }
        };

        for c in self.active_components() {
            let resolved = c.condition_unchecked(&all)?;
            let value = &all[c.name()];

            // d/d(value) — only when the component's own variable is tracked.
            if tracked.contains(c.name()) {
                let g = resolved.grad_logpdf(value)?;
                add(&mut cot, c.name(), g);
            }

            // d/d(deferred parameter dependencies).
            if let DistKind::Gaussian(gd) = c.kind() {
                match &gd.mean {
                    MeanParam::Fixed(_) => {}
                    MeanParam::Var { dep } => {
                        if tracked.contains(dep) {
                            // d logpdf / d mean = (x - mu) / v = -grad_x.
                            let gx = resolved.grad_logpdf(value)?;
                            add(&mut cot, dep, gx.iter().map(|g| -g).collect());
                        }
                    }
                    MeanParam::Model { dep, model } => {
                        if tracked.contains(dep) {
                            let gx = resolved.grad_logpdf(value)?;
                            let r: Vec<f64> = gx.iter().map(|g| -g).collect();
                            let pulled = model.vjp(&all[dep], &r)?;
                            add(&mut cot, dep, pulled);
                        }
                    }
                }
            }
            for dep in scale_deps(c) {
                if tracked.contains(&dep) {
                    return Err(Error::capability(format!(
                        "gradient with respect to deferred scale parameter '{dep}' \
                         of '{}' is not available",
                        c.name()
                    )));
                }
            }
        }

        // Push node cotangents back to their parents, leaves first.
        for &idx in self.joint.node_order.iter().rev() {
            let node = &self.joint.nodes[idx];
            let Some(v) = cot.get(&node.name).cloned() else {
                continue;
            };
            let vjp = node.vjp.as_ref().ok_or_else(|| {
                Error::capability(format!(
                    "deterministic node '{}' provides no gradient information",
                    node.name
                ))
            })?;
            for dep in &node.deps {
                if tracked.contains(dep) {
                    let pulled = vjp(&all, dep, &v);
                    add(&mut cot, dep, pulled);
                }
            }
        }

        let mut out = HashMap::new();
        for v in vars {
            let dim = self.target_dim(v)?;
            let g = cot.remove(v.as_str()).unwrap_or_else(|| vec![0.0; dim]);
            if !requested.contains(v.as_str()) {
                continue;
            }
            out.insert(v.clone(), g);
        }
        Ok(out)
    }

    pub fn grad_log_density(&self, assignment: &Assignment) -> Result<Assignment> {
        self.grad_log_density_for(&self.targets.clone(), assignment)
    }

    /// Structural check: can gradients be computed for these variables?
    pub fn has_gradients_for(&self, vars: &[String]) -> bool {
        let mut tracked: HashSet<String> = vars.iter().cloned().collect();
        loop {
            let mut changed = false;
            for n in &self.joint.nodes {
                if !tracked.contains(&n.name) && n.deps.iter().any(|d| tracked.contains(d)) {
                    tracked.insert(n.name.clone());
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        for c in self.active_components() {
            let value_tracked = tracked.contains(c.name());
            let mean_dep_tracked = match c.kind() {
                DistKind::Gaussian(g) => match &g.mean {
                    MeanParam::Fixed(_) => false,
                    MeanParam::Var { dep } => tracked.contains(dep),
                    MeanParam::Model { dep, model } => {
                        if tracked.contains(dep) {
                            if !model.has_jacobian() {
                                return false;
                            }
                            true
                        } else {
                            false
                        }
                    }
                },
                _ => false,
            };
            if scale_deps(c).iter().any(|d| tracked.contains(d)) {
                return false;
            }
            if (value_tracked || mean_dep_tracked) && !family_differentiable(c) {
                return false;
            }
        }
        for n in &self.joint.nodes {
            if tracked.contains(&n.name) && n.vjp.is_none() {
                return false;
            }
        }
        true
    }

    pub fn has_gradients(&self) -> bool {
        self.has_gradients_for(&self.targets.clone())
    }

    /// Components whose density involves the named variable (directly or
    /// through deterministic nodes), excluding the variable's own component.
    pub fn dependents_of(&self, var: &str) -> Vec<&Distribution> {
        let mut tracked: HashSet<String> = HashSet::new();
        tracked.insert(var.to_string());
        loop {
            let mut changed = false;
            for n in &self.joint.nodes {
                if !tracked.contains(&n.name) && n.deps.iter().any(|d| tracked.contains(d)) {
                    tracked.insert(n.name.clone());
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        self.joint
            .components
            .iter()
            .filter(|c| c.name() != var)
            .filter(|c| {
                c.conditioning_variables()
                    .iter()
                    .any(|d| tracked.contains(d))
            })
            .collect()
    }
}

fn family_differentiable(c: &Distribution) -> bool {
    match c.kind() {
        DistKind::Gaussian(_)
        | DistKind::Gamma(_)
        | DistKind::Lognormal(_)
        | DistKind::Gmrf(_)
        | DistKind::Cmrf(_) => true,
        DistKind::Lmrf(_) | DistKind::Uniform(_) => false,
        DistKind::UserDefined(u) => u.grad.is_some(),
    }
}

fn scale_deps(c: &Distribution) -> Vec<String> {
    let mut deps = Vec::new();
    match c.kind() {
        DistKind::Gaussian(g) => {
            let all = c.conditioning_variables();
            let mean_dep = g.mean.dep_name();
            for d in all {
                if Some(d.as_str()) != mean_dep {
                    deps.push(d);
                }
            }
        }
        DistKind::Gmrf(m) | DistKind::Lmrf(m) | DistKind::Cmrf(m) => {
            if let Some(d) = m.scale.dep() {
                deps.push(d.to_string());
            }
        }
        _ => {}
    }
    deps
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::GaussianSpread;
    use approx::assert_relative_eq;

    fn asg(pairs: &[(&str, Vec<f64>)]) -> Assignment {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.clone()))
            .collect()
    }

    #[test]
    fn two_independent_normals_logpdf_adds() {
        let a = Distribution::gaussian("a", vec![0.0], GaussianSpread::fixed_std(1.0)).unwrap();
        let b = Distribution::gaussian("b", vec![0.0], GaussianSpread::fixed_std(1.0)).unwrap();
        let joint = JointDistribution::new(vec![a, b]).unwrap();
        let lp = joint
            .logpdf(&asg(&[("a", vec![0.0]), ("b", vec![0.0])]))
            .unwrap();
        assert_relative_eq!(lp, 2.0 * -0.918_938_533_204_672_7, epsilon = 1e-9);
    }

    #[test]
    fn chain_logpdf_hand_value() {
        // x ~ N(0,1), y ~ N(x,1) at (0,0): -1.837877.
        let x = Distribution::gaussian("x", vec![0.0], GaussianSpread::fixed_std(1.0)).unwrap();
        let y = Distribution::gaussian_of_var(
            "y",
            "x",
            Geometry::continuous_1d(1),
            GaussianSpread::fixed_std(1.0),
        )
        .unwrap();
        let joint = JointDistribution::new(vec![y, x]).unwrap();
        let lp = joint
            .logpdf(&asg(&[("x", vec![0.0]), ("y", vec![0.0])]))
            .unwrap();
        assert_relative_eq!(lp, -1.837_877_066_409_345, epsilon = 1e-9);
    }

    #[test]
    fn missing_variable_is_named() {
        let x = Distribution::gaussian("x", vec![0.0], GaussianSpread::fixed_std(1.0)).unwrap();
        let joint = JointDistribution::new(vec![x]).unwrap();
        match joint.logpdf(&Assignment::new()) {
            Err(Error::UnknownVariable { name, .. }) => assert_eq!(name, "x"),
            other => panic!("expected unknown variable, got {other:?}"),
        }
    }

    #[test]
    fn factorization_rendering() {
        let x = Distribution::gaussian("x", vec![0.0], GaussianSpread::fixed_std(1.0)).unwrap();
        let y = Distribution::gaussian_of_var(
            "y",
            "x",
            Geometry::continuous_1d(1),
            GaussianSpread::fixed_std(1.0),
        )
        .unwrap();
        let joint = JointDistribution::new(vec![y, x]).unwrap();
        assert_eq!(joint.factorization(), "p(y,x) = p(y|x)p(x)");
    }

    #[test]
    fn cyclic_graph_is_rejected() {
        let a = Distribution::gaussian_of_var(
            "a",
            "b",
            Geometry::continuous_1d(1),
            GaussianSpread::fixed_std(1.0),
        )
        .unwrap();
        let b = Distribution::gaussian_of_var(
            "b",
            "a",
            Geometry::continuous_1d(1),
            GaussianSpread::fixed_std(1.0),
        )
        .unwrap();
        assert!(JointDistribution::new(vec![a, b]).is_err());
    }

    #[test]
    fn conditioning_produces_posterior_and_rejects_total_conditioning() {
        let x = Distribution::gaussian("x", vec![0.0], GaussianSpread::fixed_std(1.0)).unwrap();
        let y = Distribution::gaussian_of_var(
            "y",
            "x",
            Geometry::continuous_1d(1),
            GaussianSpread::fixed_std(1.0),
        )
        .unwrap();
        let joint = JointDistribution::new(vec![y, x]).unwrap();
        let post = joint.condition(&[("y", vec![0.5])]).unwrap();
        assert_eq!(post.targets(), &["x".to_string()]);
        assert!(joint
            .condition(&[("y", vec![0.5]), ("x", vec![0.0])])
            .is_err());
    }

    #[test]
    fn posterior_differences_match_component_sums() {
        // Posterior log-density differences equal the sum of component
        // logpdf differences (the dropped constant cancels).
        let x = Distribution::gaussian("x", vec![0.0], GaussianSpread::fixed_std(2.0)).unwrap();
        let y = Distribution::gaussian_of_var(
            "y",
            "x",
            Geometry::continuous_1d(1),
            GaussianSpread::fixed_std(0.5),
        )
        .unwrap();
        let joint = JointDistribution::new(vec![y.clone(), x.clone()]).unwrap();
        let y_obs = vec![0.3];
        let post = joint.condition(&[("y", y_obs.clone())]).unwrap();

        let a = asg(&[("x", vec![0.2])]);
        let b = asg(&[("x", vec![-0.7])]);
        let diff_post = post.log_density(&a).unwrap() - post.log_density(&b).unwrap();

        let mut manual = 0.0;
        for (xa, xb) in [(0.2, -0.7)].iter().map(|&(p, q)| (vec![p], vec![q])) {
            let prior = &x;
            manual += prior.logpdf(&xa).unwrap() - prior.logpdf(&xb).unwrap();
            let lik_a = y
                .condition_unchecked(&asg(&[("x", xa.clone())]))
                .unwrap()
                .logpdf(&y_obs)
                .unwrap();
            let lik_b = y
                .condition_unchecked(&asg(&[("x", xb.clone())]))
                .unwrap()
                .logpdf(&y_obs)
                .unwrap();
            manual += lik_a - lik_b;
        }
        assert_relative_eq!(diff_post, manual, epsilon = 1e-12);
    }

    #[test]
    fn posterior_reinserting_data_reproduces_joint_up_to_constant() {
        let x = Distribution::gaussian("x", vec![0.0], GaussianSpread::fixed_std(1.0)).unwrap();
        let z = Distribution::gaussian("z", vec![5.0], GaussianSpread::fixed_std(1.0)).unwrap();
        let y = Distribution::gaussian_of_var(
            "y",
            "x",
            Geometry::continuous_1d(1),
            GaussianSpread::fixed_std(1.0),
        )
        .unwrap();
        let joint = JointDistribution::new(vec![y, x, z]).unwrap();
        let post = joint
            .condition(&[("y", vec![0.4]), ("z", vec![4.0])])
            .unwrap();
        // The posterior omits p(z) (a constant); check the difference is the
        // same constant across assignments.
        let consts: Vec<f64> = [vec![0.1], vec![1.3], vec![-0.8]]
            .into_iter()
            .map(|xv| {
                let joint_lp = joint
                    .logpdf(&asg(&[
                        ("x", xv.clone()),
                        ("y", vec![0.4]),
                        ("z", vec![4.0]),
                    ]))
                    .unwrap();
                let post_lp = post.log_density(&asg(&[("x", xv)])).unwrap();
                joint_lp - post_lp
            })
            .collect();
        for c in &consts[1..] {
            assert_relative_eq!(*c, consts[0], epsilon = 1e-12);
        }
    }

    #[test]
    fn deterministic_node_gradients_flow_to_parents() {
        // u ~ N(0,1), w ~ N(0,1), x = u + 2w, y ~ N(x, 1) observed.
        let u = Distribution::gaussian("u", vec![0.0], GaussianSpread::fixed_std(1.0)).unwrap();
        let w = Distribution::gaussian("w", vec![0.0], GaussianSpread::fixed_std(1.0)).unwrap();
        let y = Distribution::gaussian_of_var(
            "y",
            "x",
            Geometry::continuous_1d(1),
            GaussianSpread::fixed_std(1.0),
        )
        .unwrap();
        let node = DeterministicNode::new(
            "x",
            vec!["u".into(), "w".into()],
            1,
            Arc::new(|a: &Assignment| vec![a["u"][0] + 2.0 * a["w"][0]]),
            Some(Arc::new(|_a: &Assignment, parent: &str, v: &[f64]| {
                match parent {
                    "u" => vec![v[0]],
                    "w" => vec![2.0 * v[0]],
                    _ => unreachable!(),
                }
            })),
        );
        let joint =
            JointDistribution::with_deterministic(vec![y, u, w], vec![node]).unwrap();
        let post = joint.condition(&[("y", vec![1.0])]).unwrap();
        assert!(post.has_gradients());

        let a = asg(&[("u", vec![0.3]), ("w", vec![-0.2])]);
        let g = post.grad_log_density(&a).unwrap();
        // Finite differences on the posterior log-density.
        for (var, idx) in [("u", 0), ("w", 1)] {
            let _ = idx;
            let h = 1e-6;
            let mut ap = a.clone();
            let mut am = a.clone();
            ap.get_mut(var).unwrap()[0] += h;
            am.get_mut(var).unwrap()[0] -= h;
            let fd =
                (post.log_density(&ap).unwrap() - post.log_density(&am).unwrap()) / (2.0 * h);
            assert_relative_eq!(g[var][0], fd, max_relative = 1e-5, epsilon = 1e-8);
        }
    }

    #[test]
    fn evaluation_failures_count_as_zero_probability() {
        let model = crate::models::gravity_model(10).unwrap();
        let prior = Distribution::gaussian(
            "x",
            vec![1550.0, 850.0, 950.0],
            GaussianSpread::diag_std(vec![500.0, 300.0, 300.0]),
        )
        .unwrap();
        let y = Distribution::gaussian_model("y", "x", model, GaussianSpread::fixed_std(1e-6))
            .unwrap();
        let joint = JointDistribution::new(vec![y, prior]).unwrap();
        let post = joint.condition(&[("y", vec![0.0; 10])]).unwrap();
        let lp = post
            .log_density(&asg(&[("x", vec![-10.0, 800.0, 1000.0])]))
            .unwrap();
        assert_eq!(lp, f64::NEG_INFINITY);
    }
}
