//! DAGs with a distinguished response node `Y` and environment node `E`.
//!
//! Provides the graph-theoretic quantities used by the rest of the crate:
//! relatives, d-separation, Markov blanket, forbidden descendants, stable
//! blanket, the star condition, and action-set augmentation.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A labeled DAG with response and environment nodes.
///
/// Immutable after construction; all derived sets can be shared across
/// threads freely.
#[derive(Debug, Clone)]
pub struct Dag {
    labels: Vec<String>,
    index: HashMap<String, usize>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    response: usize,
    env: usize,
    /// Covariate node ids in declaration order; the position is the dense
    /// column index used for matrix alignment.
    covariates: Vec<usize>,
}

/// A deduplicated set of covariate nodes (never contains `Y` or `E`).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Default)]
pub struct NodeSet(BTreeSet<usize>);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelativeKind {
    Parents,
    Children,
    Descendants,
    Nondescendants,
}

impl Dag {
    /// Builds a DAG from labels and `(parent, child)` edges.
    ///
    /// Fails if labels are duplicated, an edge endpoint is unknown, the graph
    /// has a cycle, `env` has incoming edges, or there is an edge `env -> response`.
    pub fn new<S: AsRef<str>>(
        nodes: &[S],
        edges: &[(S, S)],
        response: &str,
        env: &str,
    ) -> Result<Self> {
        let labels: Vec<String> = nodes.iter().map(|s| s.as_ref().to_string()).collect();
        let mut index = HashMap::new();
        for (i, l) in labels.iter().enumerate() {
            if l.is_empty() {
                return Err(Error::validation("empty node label"));
            }
            if index.insert(l.clone(), i).is_some() {
                return Err(Error::validation(format!("duplicate node label `{l}`")));
            }
        }
        let response = *index
            .get(response)
            .ok_or_else(|| Error::input(format!("unknown response label `{response}`")))?;
        let env = *index
            .get(env)
            .ok_or_else(|| Error::input(format!("unknown env label `{env}`")))?;
        if response == env {
            return Err(Error::validation("response and env must be distinct nodes"));
        }

        let n = labels.len();
        let mut edge_set: BTreeSet<(usize, usize)> = BTreeSet::new();
        for (a, b) in edges {
            let a = *index
                .get(a.as_ref())
                .ok_or_else(|| Error::input(format!("unknown edge endpoint `{}`", a.as_ref())))?;
            let b = *index
                .get(b.as_ref())
                .ok_or_else(|| Error::input(format!("unknown edge endpoint `{}`", b.as_ref())))?;
            if a == b {
                return Err(Error::validation(format!("self-loop on `{}`", labels[a])));
            }
            edge_set.insert((a, b));
        }

        let mut parents = vec![Vec::new(); n];
        let mut children = vec![Vec::new(); n];
        for &(a, b) in &edge_set {
            parents[b].push(a);
            children[a].push(b);
        }

        if !parents[env].is_empty() {
            return Err(Error::validation(format!(
                "env node `{}` must be a source node",
                labels[env]
            )));
        }
        if edge_set.contains(&(env, response)) {
            return Err(Error::validation(format!(
                "edge `{} -> {}` from env into response is not allowed",
                labels[env], labels[response]
            )));
        }

        let dag = Dag {
            covariates: (0..n).filter(|&i| i != response && i != env).collect(),
            labels,
            index,
            parents,
            children,
            response,
            env,
        };
        if let Some(cycle) = dag.find_cycle() {
            let path: Vec<&str> = cycle.iter().map(|&i| dag.labels[i].as_str()).collect();
            return Err(Error::validation(format!(
                "graph has a cycle: {}",
                path.join(" -> ")
            )));
        }
        Ok(dag)
    }

    pub fn node_count(&self) -> usize {
        self.labels.len()
    }

    pub fn label(&self, id: usize) -> &str {
        &self.labels[id]
    }

    pub fn node_id(&self, label: &str) -> Result<usize> {
        self.index
            .get(label)
            .copied()
            .ok_or_else(|| Error::input(format!("unknown node label `{label}`")))
    }

    pub fn response(&self) -> usize {
        self.response
    }

    pub fn env(&self) -> usize {
        self.env
    }

    /// Covariate node ids in declaration order.
    pub fn covariates(&self) -> &[usize] {
        &self.covariates
    }

    /// Dense covariate column index of a node, if it is a covariate.
    pub fn covariate_index(&self, id: usize) -> Option<usize> {
        self.covariates.iter().position(|&c| c == id)
    }

    pub fn parents_of(&self, id: usize) -> &[usize] {
        &self.parents[id]
    }

    pub fn children_of(&self, id: usize) -> &[usize] {
        &self.children[id]
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.children[from].binary_search(&to).is_ok()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.children
            .iter()
            .enumerate()
            .flat_map(|(a, cs)| cs.iter().map(move |&b| (a, b)))
    }

    /// Node ids in a topological order (parents before children).
    pub fn topological_order(&self) -> Vec<usize> {
        let n = self.node_count();
        let mut indeg: Vec<usize> = (0..n).map(|i| self.parents[i].len()).collect();
        let mut queue: VecDeque<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &c in &self.children[v] {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    queue.push_back(c);
                }
            }
        }
        debug_assert_eq!(order.len(), n);
        order
    }

    fn find_cycle(&self) -> Option<Vec<usize>> {
        // Iterative DFS with colors; returns the cycle path if one exists.
        let n = self.node_count();
        let mut color = vec![0u8; n]; // 0 = white, 1 = gray, 2 = black
        let mut parent_of = vec![usize::MAX; n];
        for start in 0..n {
            if color[start] != 0 {
                continue;
            }
            let mut stack = vec![(start, 0usize)];
            color[start] = 1;
            while let Some(&mut (v, ref mut ci)) = stack.last_mut() {
                if *ci < self.children[v].len() {
                    let c = self.children[v][*ci];
                    *ci += 1;
                    match color[c] {
                        0 => {
                            color[c] = 1;
                            parent_of[c] = v;
                            stack.push((c, 0));
                        }
                        1 => {
                            // Found a back edge v -> c; walk back to recover the cycle.
                            let mut path = vec![c];
                            let mut cur = v;
                            while cur != c {
                                path.push(cur);
                                cur = parent_of[cur];
                            }
                            path.push(c);
                            path.reverse();
                            return Some(path);
                        }
                        _ => {}
                    }
                } else {
                    color[v] = 2;
                    stack.pop();
                }
            }
        }
        None
    }

    /// All descendants of `id`, excluding `id` itself, as a raw id set.
    pub fn descendant_ids(&self, id: usize) -> BTreeSet<usize> {
        let mut seen = BTreeSet::new();
        let mut queue: VecDeque<usize> = self.children[id].iter().copied().collect();
        while let Some(v) = queue.pop_front() {
            if seen.insert(v) {
                queue.extend(self.children[v].iter().copied());
            }
        }
        seen
    }

    /// Descendants of any node in `ids` (the nodes themselves excluded unless
    /// reachable from another member).
    pub fn descendant_ids_of_set(&self, ids: &BTreeSet<usize>) -> BTreeSet<usize> {
        let mut seen = BTreeSet::new();
        let mut queue: VecDeque<usize> = ids
            .iter()
            .flat_map(|&i| self.children[i].iter().copied())
            .collect();
        while let Some(v) = queue.pop_front() {
            if seen.insert(v) {
                queue.extend(self.children[v].iter().copied());
            }
        }
        seen
    }

    fn covariate_set(&self, ids: impl IntoIterator<Item = usize>) -> NodeSet {
        NodeSet(
            ids.into_iter()
                .filter(|&i| i != self.response && i != self.env)
                .collect(),
        )
    }
}

impl NodeSet {
    pub fn empty() -> Self {
        NodeSet(BTreeSet::new())
    }

    /// Builds a set from node ids, dropping nothing; fails on `Y`/`E` members.
    pub fn from_ids(dag: &Dag, ids: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut set = BTreeSet::new();
        for id in ids {
            if id >= dag.node_count() {
                return Err(Error::input(format!("node id {id} out of range")));
            }
            if id == dag.response() || id == dag.env() {
                return Err(Error::input(format!(
                    "node `{}` cannot be a member of a covariate set",
                    dag.label(id)
                )));
            }
            set.insert(id);
        }
        Ok(NodeSet(set))
    }

    pub fn from_labels<S: AsRef<str>>(dag: &Dag, labels: &[S]) -> Result<Self> {
        let ids = labels
            .iter()
            .map(|l| dag.node_id(l.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        Self::from_ids(dag, ids)
    }

    pub fn contains(&self, id: usize) -> bool {
        self.0.contains(&id)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn ids(&self) -> &BTreeSet<usize> {
        &self.0
    }

    pub fn union(&self, other: &NodeSet) -> NodeSet {
        NodeSet(self.0.union(&other.0).copied().collect())
    }

    pub fn intersection(&self, other: &NodeSet) -> NodeSet {
        NodeSet(self.0.intersection(&other.0).copied().collect())
    }

    pub fn difference(&self, other: &NodeSet) -> NodeSet {
        NodeSet(self.0.difference(&other.0).copied().collect())
    }

    pub fn is_subset(&self, other: &NodeSet) -> bool {
        self.0.is_subset(&other.0)
    }

    pub fn to_labels(&self, dag: &Dag) -> Vec<String> {
        self.0.iter().map(|&i| dag.label(i).to_string()).collect()
    }

    pub fn display<'a>(&'a self, dag: &'a Dag) -> NodeSetDisplay<'a> {
        NodeSetDisplay { set: self, dag }
    }
}

impl FromIterator<usize> for NodeSet {
    /// Unchecked collection; prefer `from_ids` when the source is untrusted.
    fn from_iter<T: IntoIterator<Item = usize>>(iter: T) -> Self {
        NodeSet(iter.into_iter().collect())
    }
}

pub struct NodeSetDisplay<'a> {
    set: &'a NodeSet,
    dag: &'a Dag,
}

impl fmt::Display for NodeSetDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let labels = self.set.to_labels(self.dag);
        write!(f, "{}", labels.join(","))
    }
}

/// Parents, children, descendants, or non-descendants of a node, restricted
/// to covariates (the node itself, `Y`, and `E` are excluded).
pub fn relatives(dag: &Dag, node: &str, kind: RelativeKind) -> Result<NodeSet> {
    let id = dag.node_id(node)?;
    let ids: BTreeSet<usize> = match kind {
        RelativeKind::Parents => dag.parents_of(id).iter().copied().collect(),
        RelativeKind::Children => dag.children_of(id).iter().copied().collect(),
        RelativeKind::Descendants => dag.descendant_ids(id),
        RelativeKind::Nondescendants => {
            let de = dag.descendant_ids(id);
            (0..dag.node_count())
                .filter(|&v| v != id && !de.contains(&v))
                .collect()
        }
    };
    Ok(dag.covariate_set(ids))
}

/// d-separation of `a` and `b` given `z`, by active-trail reachability.
pub fn d_separated(dag: &Dag, a: &str, b: &str, z: &NodeSet) -> Result<bool> {
    let a = dag.node_id(a)?;
    let b = dag.node_id(b)?;
    if a == b {
        return Err(Error::input("d-separation endpoints must be distinct"));
    }
    if z.contains(a) || z.contains(b) {
        return Err(Error::input(
            "d-separation endpoints must not be in the conditioning set",
        ));
    }
    Ok(!reachable(dag, a, b, z.ids()))
}

/// Active-trail reachability (Bayes-ball style): `true` iff some path from
/// `a` to `b` is active given `z`.
fn reachable(dag: &Dag, a: usize, b: usize, z: &BTreeSet<usize>) -> bool {
    let n = dag.node_count();
    // Ancestors of z (including z itself): colliders in this set are active.
    let mut anc_z = vec![false; n];
    let mut stack: Vec<usize> = z.iter().copied().collect();
    while let Some(v) = stack.pop() {
        if !anc_z[v] {
            anc_z[v] = true;
            stack.extend(dag.parents_of(v).iter().copied());
        }
    }

    // State: (node, direction). Direction `Up` means the trail entered the
    // node from one of its children (moving against the arrows); `Down`
    // means it entered from a parent.
    const UP: usize = 0;
    const DOWN: usize = 1;
    let mut visited = vec![[false; 2]; n];
    let mut queue = VecDeque::new();
    queue.push_back((a, UP));
    while let Some((v, dir)) = queue.pop_front() {
        if visited[v][dir] {
            continue;
        }
        visited[v][dir] = true;
        let in_z = z.contains(&v);
        if v == b && !in_z {
            return true;
        }
        if dir == UP && !in_z {
            for &p in dag.parents_of(v) {
                queue.push_back((p, UP));
            }
            for &c in dag.children_of(v) {
                queue.push_back((c, DOWN));
            }
        } else if dir == DOWN {
            if !in_z {
                for &c in dag.children_of(v) {
                    queue.push_back((c, DOWN));
                }
            }
            if anc_z[v] {
                for &p in dag.parents_of(v) {
                    queue.push_back((p, UP));
                }
            }
        }
    }
    false
}

/// `PA(Y) ∪ CH(Y) ∪ PA(CH(Y))`, excluding `Y` and `E`.
pub fn markov_blanket(dag: &Dag) -> NodeSet {
    let y = dag.response();
    let mut ids: BTreeSet<usize> = dag.parents_of(y).iter().copied().collect();
    for &c in dag.children_of(y) {
        ids.insert(c);
        ids.extend(dag.parents_of(c).iter().copied());
    }
    ids.remove(&y);
    dag.covariate_set(ids)
}

/// Intervened children of `Y` and their descendant closure.
///
/// Returns `(ch_int, forb)` where `ch_int = CH(Y) ∩ CH(E)` and
/// `forb = ch_int ∪ DE(ch_int)`; `forb` is closed under taking descendants.
pub fn forbidden_descendants(dag: &Dag) -> (NodeSet, NodeSet) {
    let y = dag.response();
    let e = dag.env();
    let ch_y: BTreeSet<usize> = dag.children_of(y).iter().copied().collect();
    let ch_e: BTreeSet<usize> = dag.children_of(e).iter().copied().collect();
    let ch_int: BTreeSet<usize> = ch_y.intersection(&ch_e).copied().collect();
    let mut forb = dag.descendant_ids_of_set(&ch_int);
    forb.extend(ch_int.iter().copied());
    (dag.covariate_set(ch_int), dag.covariate_set(forb))
}

/// The stable blanket: `PA(Y) ∪ (CH(Y) \ forb) ∪ PA(CH(Y) \ forb)`,
/// excluding `Y` and `E`.
pub fn stable_blanket(dag: &Dag) -> NodeSet {
    let y = dag.response();
    let (_, forb) = forbidden_descendants(dag);
    let mut ids: BTreeSet<usize> = dag.parents_of(y).iter().copied().collect();
    for &c in dag.children_of(y) {
        if !forb.contains(c) && c != dag.env() {
            ids.insert(c);
            ids.extend(dag.parents_of(c).iter().copied());
        }
    }
    ids.remove(&y);
    dag.covariate_set(ids)
}

/// The graphical condition `CH(Y) ∩ DE(CH_int(Y)) ⊆ CH_int(Y)`.
pub fn check_star_condition(dag: &Dag) -> bool {
    let y = dag.response();
    let (ch_int, _) = forbidden_descendants(dag);
    let de: BTreeSet<usize> = dag.descendant_ids_of_set(ch_int.ids());
    dag.children_of(y)
        .iter()
        .filter(|&&c| de.contains(&c))
        .all(|&c| ch_int.contains(c))
}

/// Permitted new parents per intervened node.
#[derive(Debug, Clone, Default)]
pub struct AugmentationSpec {
    /// Keyed by target node id; values are the permitted new parents.
    actions: BTreeMap<usize, NodeSet>,
}

impl AugmentationSpec {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_labels<S: AsRef<str>>(dag: &Dag, actions: &[(S, Vec<S>)]) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (target, parents) in actions {
            let t = dag.node_id(target.as_ref())?;
            let set = NodeSet::from_labels(dag, parents)?;
            map.insert(t, set);
        }
        Ok(AugmentationSpec { actions: map })
    }

    pub fn insert(&mut self, target: usize, parents: NodeSet) {
        self.actions.insert(target, parents);
    }

    pub fn targets(&self) -> impl Iterator<Item = usize> + '_ {
        self.actions.keys().copied()
    }

    pub fn action_set(&self, target: usize) -> Option<&NodeSet> {
        self.actions.get(&target)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &NodeSet)> + '_ {
        self.actions.iter().map(|(&k, v)| (k, v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AugmentationRule {
    /// The target is not a child of the environment node.
    TargetNotEnvChild,
    /// The action set contains the response node.
    ParentIsResponse,
    /// The action set contains the environment node.
    ParentIsEnv,
    /// The action set member is a forbidden descendant.
    ParentForbidden,
    /// Adding all action edges would create a cycle.
    CreatesCycle,
}

impl fmt::Display for AugmentationRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            AugmentationRule::TargetNotEnvChild => "target is not a child of the env node",
            AugmentationRule::ParentIsResponse => "response node cannot be an action parent",
            AugmentationRule::ParentIsEnv => "env node cannot be an action parent",
            AugmentationRule::ParentForbidden => "action parent is a forbidden descendant",
            AugmentationRule::CreatesCycle => "augmented graph would contain a cycle",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone)]
pub struct AugmentationViolation {
    pub target: String,
    /// The offending action parent, if the rule concerns a specific member.
    pub parent: Option<String>,
    pub rule: AugmentationRule,
    /// Cycle witness for `CreatesCycle`.
    pub cycle: Vec<String>,
}

impl fmt::Display for AugmentationViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.parent, self.rule) {
            (Some(p), rule) => write!(f, "({} <- {}): {}", self.target, p, rule),
            (None, AugmentationRule::CreatesCycle) => {
                write!(f, "({}): {}: {}", self.target, self.rule, self.cycle.join(" -> "))
            }
            (None, rule) => write!(f, "({}): {}", self.target, rule),
        }
    }
}

/// Checks an augmentation spec: every target must be a child of `E`, every
/// action set must avoid `Y`, `E`, and the forbidden descendants, and the
/// maximal augmentation (all action edges added) must stay acyclic.
///
/// Returns all violations; an empty vector means the spec is admissible.
pub fn validate_augmentation(dag: &Dag, spec: &AugmentationSpec) -> Vec<AugmentationViolation> {
    let mut violations = Vec::new();
    let (_, forb) = forbidden_descendants(dag);
    let ch_e: BTreeSet<usize> = dag.children_of(dag.env()).iter().copied().collect();

    for (target, parents) in spec.iter() {
        if !ch_e.contains(&target) {
            violations.push(AugmentationViolation {
                target: dag.label(target).to_string(),
                parent: None,
                rule: AugmentationRule::TargetNotEnvChild,
                cycle: Vec::new(),
            });
        }
        for p in parents.iter() {
            if forb.contains(p) {
                violations.push(AugmentationViolation {
                    target: dag.label(target).to_string(),
                    parent: Some(dag.label(p).to_string()),
                    rule: AugmentationRule::ParentForbidden,
                    cycle: Vec::new(),
                });
            }
        }
    }

    // NodeSet construction already rejects Y and E, but a spec assembled from
    // raw ids could still smuggle them in; check defensively through labels.
    if violations.is_empty() {
        if let Err(err) = augment_edges(dag, spec.iter().map(|(t, s)| (t, s.clone()))) {
            if let Error::Validation(msg) = &err {
                violations.push(AugmentationViolation {
                    target: String::new(),
                    parent: None,
                    rule: AugmentationRule::CreatesCycle,
                    cycle: msg
                        .trim_start_matches("graph has a cycle: ")
                        .split(" -> ")
                        .map(|s| s.to_string())
                        .collect(),
                });
            }
        }
    }
    violations
}

fn augment_edges(
    dag: &Dag,
    chosen: impl Iterator<Item = (usize, NodeSet)>,
) -> Result<Dag> {
    let mut edge_ids: Vec<(usize, usize)> = dag.edges().collect();
    for (target, parents) in chosen {
        for p in parents.iter() {
            if !edge_ids.contains(&(p, target)) {
                edge_ids.push((p, target));
            }
        }
    }
    let labels: Vec<&str> = dag.labels.iter().map(|s| s.as_str()).collect();
    let edges: Vec<(&str, &str)> = edge_ids
        .iter()
        .map(|&(a, b)| (labels[a], labels[b]))
        .collect();
    Dag::new(
        &labels,
        &edges,
        dag.label(dag.response()),
        dag.label(dag.env()),
    )
}

/// Adds the chosen action edges and returns the augmented DAG.
///
/// `chosen` maps targets to subsets of their action sets. Existing edges are
/// kept as-is; a cyclic result is rejected with a cycle witness.
pub fn augment(
    dag: &Dag,
    spec: &AugmentationSpec,
    chosen: &BTreeMap<usize, NodeSet>,
) -> Result<Dag> {
    let mut restricted = AugmentationSpec::new();
    for (&target, set) in chosen {
        let allowed = spec
            .action_set(target)
            .ok_or_else(|| Error::input(format!(
                "node `{}` has no action set",
                dag.label(target)
            )))?;
        if !set.is_subset(allowed) {
            return Err(Error::input(format!(
                "chosen parents for `{}` exceed its action set",
                dag.label(target)
            )));
        }
        restricted.insert(target, set.clone());
    }
    let violations = validate_augmentation(dag, &restricted);
    if !violations.is_empty() {
        return Err(Error::validation(format!(
            "augmentation rejected: {}",
            violations
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join("; ")
        )));
    }
    augment_edges(dag, restricted.iter().map(|(t, s)| (t, s.clone())))
}

/// Serializable DAG description; the on-disk JSON schema.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DagSpec {
    pub nodes: Vec<String>,
    pub edges: Vec<(String, String)>,
    pub response: String,
    pub env: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub action_sets: BTreeMap<String, Vec<String>>,
}

impl DagSpec {
    pub fn build(&self) -> Result<(Dag, AugmentationSpec)> {
        let edges: Vec<(&str, &str)> = self
            .edges
            .iter()
            .map(|(a, b)| (a.as_str(), b.as_str()))
            .collect();
        let nodes: Vec<&str> = self.nodes.iter().map(|s| s.as_str()).collect();
        let dag = Dag::new(&nodes, &edges, &self.response, &self.env)?;
        let actions: Vec<(&str, Vec<&str>)> = self
            .action_sets
            .iter()
            .map(|(k, v)| (k.as_str(), v.iter().map(|s| s.as_str()).collect()))
            .collect();
        let spec = AugmentationSpec::from_labels(&dag, &actions)?;
        Ok((dag, spec))
    }

    pub fn from_dag(dag: &Dag, spec: &AugmentationSpec) -> Self {
        DagSpec {
            nodes: dag.labels.clone(),
            edges: dag
                .edges()
                .map(|(a, b)| (dag.label(a).to_string(), dag.label(b).to_string()))
                .collect(),
            response: dag.label(dag.response()).to_string(),
            env: dag.label(dag.env()).to_string(),
            action_sets: spec
                .iter()
                .map(|(t, s)| (dag.label(t).to_string(), s.to_labels(dag)))
                .collect(),
        }
    }
}

pub mod pathenum {
    //! Brute-force d-separation by exhaustive path enumeration.
    //!
    //! Reference implementation used by tests to cross-check the reachability
    //! algorithm; deliberately shares no code with it. Only viable for small
    //! graphs.

    use std::collections::BTreeSet;

    use super::{Dag, NodeSet};

    /// All simple undirected paths between `a` and `b`, as node id sequences.
    pub fn all_paths(dag: &Dag, a: usize, b: usize) -> Vec<Vec<usize>> {
        let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); dag.node_count()];
        for (u, v) in dag.edges() {
            adj[u].insert(v);
            adj[v].insert(u);
        }
        let mut paths = Vec::new();
        let mut current = vec![a];
        let mut on_path = vec![false; dag.node_count()];
        on_path[a] = true;
        fn dfs(
            v: usize,
            b: usize,
            adj: &[BTreeSet<usize>],
            current: &mut Vec<usize>,
            on_path: &mut [bool],
            paths: &mut Vec<Vec<usize>>,
        ) {
            if v == b {
                paths.push(current.clone());
                return;
            }
            for &w in &adj[v] {
                if !on_path[w] {
                    on_path[w] = true;
                    current.push(w);
                    dfs(w, b, adj, current, on_path, paths);
                    current.pop();
                    on_path[w] = false;
                }
            }
        }
        dfs(a, b, &adj, &mut current, &mut on_path, &mut paths);
        paths
    }

    /// Whether a single path is active given `z` under the d-separation rules.
    pub fn path_active(dag: &Dag, path: &[usize], z: &BTreeSet<usize>) -> bool {
        for w in path.windows(3) {
            let (prev, mid, next) = (w[0], w[1], w[2]);
            let collider =
                dag.parents_of(mid).contains(&prev) && dag.parents_of(mid).contains(&next);
            if collider {
                let mut activated = z.contains(&mid);
                if !activated {
                    for d in dag.descendant_ids(mid) {
                        if z.contains(&d) {
                            activated = true;
                            break;
                        }
                    }
                }
                if !activated {
                    return false;
                }
            } else if z.contains(&mid) {
                return false;
            }
        }
        true
    }

    /// d-separation by checking every simple path.
    pub fn d_separated(dag: &Dag, a: &str, b: &str, cond: &NodeSet) -> super::Result<bool> {
        let a = dag.node_id(a)?;
        let b = dag.node_id(b)?;
        let z: BTreeSet<usize> = cond.iter().collect();
        Ok(all_paths(dag, a, b)
            .iter()
            .all(|p| !path_active(dag, p, &z)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    fn set(dag: &Dag, labels: &[&str]) -> NodeSet {
        NodeSet::from_labels(dag, labels).unwrap()
    }

    #[test]
    fn rejects_cycles_and_env_violations() {
        let err = Dag::new(
            &["A", "B", "Y", "E"],
            &[("A", "B"), ("B", "A")],
            "Y",
            "E",
        )
        .unwrap_err();
        assert!(err.to_string().contains("cycle"));

        let err = Dag::new(&["A", "Y", "E"], &[("A", "E")], "Y", "E").unwrap_err();
        assert!(err.to_string().contains("source"));

        let err = Dag::new(&["A", "Y", "E"], &[("E", "Y")], "Y", "E").unwrap_err();
        assert!(err.to_string().contains("not allowed"));
    }

    #[test]
    fn relatives_on_benchmark_dag() {
        let dag = presets::fig2_dag();
        assert_eq!(
            relatives(&dag, "Y", RelativeKind::Parents).unwrap(),
            set(&dag, &["X1", "X2"])
        );
        assert_eq!(
            relatives(&dag, "X5", RelativeKind::Children).unwrap(),
            NodeSet::empty()
        );
        assert_eq!(
            relatives(&dag, "X4", RelativeKind::Descendants).unwrap(),
            set(&dag, &["X5"])
        );
        assert!(relatives(&dag, "nope", RelativeKind::Parents).is_err());
    }

    #[test]
    fn nondescendants_exclude_self_and_descendants() {
        let dag = presets::fig2_dag();
        let nd = relatives(&dag, "X4", RelativeKind::Nondescendants).unwrap();
        assert_eq!(nd, set(&dag, &["X1", "X2", "X3"]));
    }

    #[test]
    fn d_separation_on_benchmark_dag() {
        let dag = presets::fig2_dag();
        assert!(d_separated(&dag, "Y", "E", &set(&dag, &["X1", "X2", "X3"])).unwrap());
        assert!(!d_separated(&dag, "Y", "E", &NodeSet::empty()).unwrap());
        // Conditioning on the collider X4 opens E -> X4 <- Y.
        assert!(!d_separated(&dag, "Y", "E", &set(&dag, &["X1", "X2", "X4"])).unwrap());
    }

    #[test]
    fn d_separation_rejects_bad_inputs() {
        let dag = presets::fig2_dag();
        assert!(d_separated(&dag, "Y", "Y", &NodeSet::empty()).is_err());
        assert!(d_separated(&dag, "X1", "E", &set(&dag, &["X1"])).is_err());
    }

    #[test]
    fn markov_blanket_examples() {
        let dag = presets::fig2_dag();
        assert_eq!(markov_blanket(&dag), set(&dag, &["X1", "X2", "X3", "X4"]));

        let single = Dag::new(&["X1", "Y", "E"], &[("X1", "Y")], "Y", "E").unwrap();
        assert_eq!(markov_blanket(&single), set(&single, &["X1"]));

        let b2 = presets::strict_b2_dag();
        assert_eq!(markov_blanket(&b2), set(&b2, &["X1"]));
    }

    #[test]
    fn forbidden_descendants_examples() {
        let dag = presets::fig2_dag();
        let (ch_int, forb) = forbidden_descendants(&dag);
        assert_eq!(ch_int, set(&dag, &["X4"]));
        assert_eq!(forb, set(&dag, &["X4", "X5"]));

        let star = presets::star_dag();
        let (ch_int, forb) = forbidden_descendants(&star);
        assert_eq!(ch_int, set(&star, &["X2"]));
        assert_eq!(forb, set(&star, &["X1", "X2"]));

        let no_children = Dag::new(&["X1", "Y", "E"], &[("X1", "Y")], "Y", "E").unwrap();
        let (ch_int, forb) = forbidden_descendants(&no_children);
        assert!(ch_int.is_empty());
        assert!(forb.is_empty());
    }

    #[test]
    fn stable_blanket_examples() {
        let dag = presets::fig2_dag();
        assert_eq!(stable_blanket(&dag), set(&dag, &["X1", "X2", "X3"]));

        let star = presets::star_dag();
        assert_eq!(stable_blanket(&star), NodeSet::empty());

        // Without env children the stable blanket collapses to the Markov blanket.
        let quiet = Dag::new(
            &["X1", "X2", "Y", "E"],
            &[("X1", "Y"), ("Y", "X2")],
            "Y",
            "E",
        )
        .unwrap();
        assert_eq!(stable_blanket(&quiet), markov_blanket(&quiet));
    }

    #[test]
    fn star_condition_examples() {
        assert!(check_star_condition(&presets::fig2_dag()));
        assert!(!check_star_condition(&presets::star_dag()));
        let no_int = Dag::new(&["X1", "Y", "E"], &[("Y", "X1")], "Y", "E").unwrap();
        assert!(check_star_condition(&no_int));
    }

    #[test]
    fn augmentation_validation() {
        let dag = presets::fig2_dag();
        let ok = AugmentationSpec::from_labels(&dag, &[("X4", vec!["X1", "X3"])]).unwrap();
        assert!(validate_augmentation(&dag, &ok).is_empty());

        let bad = AugmentationSpec::from_labels(&dag, &[("X1", vec!["X5"])]).unwrap();
        let violations = validate_augmentation(&dag, &bad);
        assert_eq!(violations.len(), 1);
        assert_eq!(violations[0].rule, AugmentationRule::ParentForbidden);
        assert_eq!(violations[0].parent.as_deref(), Some("X5"));

        // Y in an action set is rejected at construction already.
        assert!(AugmentationSpec::from_labels(&dag, &[("X4", vec!["Y"])]).is_err());

        // A target outside CH(E).
        let off = AugmentationSpec::from_labels(&dag, &[("X3", vec!["X2"])]).unwrap();
        let violations = validate_augmentation(&dag, &off);
        assert_eq!(violations[0].rule, AugmentationRule::TargetNotEnvChild);
    }

    #[test]
    fn augmentation_cycle_detection() {
        // X1 -> X2 with both children of E; allowing X1 to gain parent X2
        // while X2 gains parent X1 closes a cycle.
        let dag = Dag::new(
            &["X1", "X2", "X3", "Y", "E"],
            &[("E", "X1"), ("E", "X2"), ("X1", "Y"), ("X3", "X1")],
            "Y",
            "E",
        )
        .unwrap();
        let spec =
            AugmentationSpec::from_labels(&dag, &[("X1", vec!["X2"]), ("X2", vec!["X1"])])
                .unwrap();
        let violations = validate_augmentation(&dag, &spec);
        assert!(violations
            .iter()
            .any(|v| v.rule == AugmentationRule::CreatesCycle));
    }

    #[test]
    fn augment_preserves_stable_blanket() {
        let dag = presets::fig2_dag();
        let spec = AugmentationSpec::from_labels(&dag, &[("X4", vec!["X1", "X3"])]).unwrap();
        let chosen: BTreeMap<usize, NodeSet> = spec.iter().map(|(t, s)| (t, s.clone())).collect();
        let augmented = augment(&dag, &spec, &chosen).unwrap();
        assert_eq!(stable_blanket(&augmented), stable_blanket(&dag));
        assert_eq!(
            forbidden_descendants(&augmented).1,
            forbidden_descendants(&dag).1
        );
        assert!(augmented.has_edge(
            augmented.node_id("X1").unwrap(),
            augmented.node_id("X4").unwrap()
        ));

        // Empty choice is the identity.
        let same = augment(&dag, &spec, &BTreeMap::new()).unwrap();
        assert_eq!(same.edges().count(), dag.edges().count());

        // Choosing an existing edge is a no-op on the edge set.
        let spec2 = AugmentationSpec::from_labels(&dag, &[("X1", vec!["X2"])]).unwrap();
        let chosen2: BTreeMap<usize, NodeSet> =
            spec2.iter().map(|(t, s)| (t, s.clone())).collect();
        let aug2 = augment(&dag, &spec2, &chosen2).unwrap();
        assert_eq!(aug2.edges().count(), dag.edges().count());
        assert_eq!(stable_blanket(&aug2), stable_blanket(&dag));
    }

    #[test]
    fn dag_spec_round_trip() {
        let json = r#"{
            "nodes": ["X1", "X2", "Y", "E"],
            "edges": [["X1", "Y"], ["E", "X1"], ["Y", "X2"]],
            "response": "Y",
            "env": "E",
            "action_sets": {"X1": ["X2"]}
        }"#;
        let spec: DagSpec = serde_json::from_str(json).unwrap();
        let (dag, aug) = spec.build().unwrap();
        assert_eq!(dag.node_count(), 4);
        assert_eq!(aug.targets().count(), 1);
        let back = DagSpec::from_dag(&dag, &aug);
        assert_eq!(back.nodes, spec.nodes);

        let bad = r#"{"nodes": ["Y","E"], "edges": [], "response": "Y", "env": "E", "bogus": 1}"#;
        assert!(serde_json::from_str::<DagSpec>(bad).is_err());
    }
}
