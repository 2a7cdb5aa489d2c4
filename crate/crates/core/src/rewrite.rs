//! View trees: project-join plans over the body atoms, built from a
//! variable order and checked for safety.

use std::collections::HashSet;
use std::fmt::Write as _;

use crate::query::{Query, Var};
use crate::set::VarSet;
use crate::vo::VariableOrder;

pub type NodeId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ViewKind {
    /// A body atom, by index.
    Atom(usize),
    Join,
    Projection,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ViewNode {
    pub id: NodeId,
    pub name: String,
    pub kind: ViewKind,
    /// The variable of the order this view was built for, if any.
    pub var: Option<Var>,
    pub schema: Vec<Var>,
    pub children: Vec<NodeId>,
    pub parent: Option<NodeId>,
    /// The subtree contains a dynamic atom.
    pub is_dynamic: bool,
}

impl ViewNode {
    pub fn schema_set(&self) -> VarSet {
        self.schema.iter().map(|v| v.index()).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ViewTree {
    nodes: Vec<ViewNode>,
    roots: Vec<NodeId>,
    /// Per root: the maximal connected set of views below and including the
    /// root whose schemas hold only free variables, in preorder.
    enumeration: Vec<Vec<NodeId>>,
}

impl ViewTree {
    pub fn nodes(&self) -> &[ViewNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &ViewNode {
        &self.nodes[id]
    }

    pub fn roots(&self) -> &[NodeId] {
        &self.roots
    }

    pub fn enumeration_subtrees(&self) -> &[Vec<NodeId>] {
        &self.enumeration
    }

    pub fn by_name(&self, name: &str) -> Option<&ViewNode> {
        self.nodes.iter().find(|n| n.name == name)
    }

    /// Atom indices below `id`.
    pub fn leaves_below(&self, id: NodeId) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            match self.nodes[n].kind {
                ViewKind::Atom(a) => out.push(a),
                _ => stack.extend(self.nodes[n].children.iter().rev()),
            }
        }
        out.sort_unstable();
        out
    }

    /// Node ids in postorder (children before parents).
    pub fn postorder(&self) -> Vec<NodeId> {
        let mut out = Vec::with_capacity(self.nodes.len());
        fn walk(t: &ViewTree, n: NodeId, out: &mut Vec<NodeId>) {
            for &c in &t.nodes[n].children {
                walk(t, c, out);
            }
            out.push(n);
        }
        for &r in &self.roots {
            walk(self, r, &mut out);
        }
        out
    }

    pub fn root_of(&self, mut id: NodeId) -> NodeId {
        while let Some(p) = self.nodes[id].parent {
            id = p;
        }
        id
    }

    /// Graphviz rendering: dynamic views red, static views blue.
    pub fn to_dot(&self, q: &Query) -> String {
        let free = q.free();
        let mut s = String::from("digraph views {\n  node [shape=plaintext];\n");
        for n in &self.nodes {
            let vars: Vec<String> = n
                .schema
                .iter()
                .map(|v| {
                    if free.contains(v.index()) {
                        format!("<u>{}</u>", q.var_name(*v))
                    } else {
                        q.var_name(*v).to_string()
                    }
                })
                .collect();
            let color = if n.is_dynamic { "red" } else { "blue" };
            let _ = writeln!(
                s,
                "  n{} [fontcolor={color}, label=<{}({})>];",
                n.id,
                n.name.replace('\'', "&#39;"),
                vars.join(",")
            );
            for &c in &n.children {
                let _ = writeln!(s, "  n{} -> n{};", n.id, c);
            }
        }
        s.push_str("}\n");
        s
    }
}

/// Assembles view trees node by node; used by [`rewrite`] and for
/// hand-written plans.
pub struct ViewTreeBuilder<'q> {
    q: &'q Query,
    nodes: Vec<ViewNode>,
    names: HashSet<String>,
}

impl<'q> ViewTreeBuilder<'q> {
    pub fn new(q: &'q Query) -> Self {
        ViewTreeBuilder {
            q,
            nodes: Vec::new(),
            names: HashSet::new(),
        }
    }

    fn push(
        &mut self,
        name: &str,
        kind: ViewKind,
        var: Option<Var>,
        schema: Vec<Var>,
        children: Vec<NodeId>,
    ) -> NodeId {
        let mut unique = name.to_string();
        let mut k = 2;
        while !self.names.insert(unique.clone()) {
            unique = format!("{name}_{k}");
            k += 1;
        }
        let id = self.nodes.len();
        let is_dynamic = match kind {
            ViewKind::Atom(a) => self.q.atom(a).is_dynamic(),
            _ => children.iter().any(|&c| self.nodes[c].is_dynamic),
        };
        for &c in &children {
            self.nodes[c].parent = Some(id);
        }
        self.nodes.push(ViewNode {
            id,
            name: unique,
            kind,
            var,
            schema,
            children,
            parent: None,
            is_dynamic,
        });
        id
    }

    pub fn atom(&mut self, index: usize) -> NodeId {
        let a = self.q.atom(index);
        let name = a.relation.clone();
        self.push(&name, ViewKind::Atom(index), None, a.vars.clone(), Vec::new())
    }

    /// A join whose schema is the union of its children's schemas, in
    /// order of first occurrence.
    pub fn join(&mut self, name: &str, children: Vec<NodeId>) -> NodeId {
        let mut schema: Vec<Var> = Vec::new();
        for &c in &children {
            for &v in &self.nodes[c].schema {
                if !schema.contains(&v) {
                    schema.push(v);
                }
            }
        }
        self.push(name, ViewKind::Join, None, schema, children)
    }

    pub fn project(&mut self, name: &str, child: NodeId, schema: Vec<Var>) -> NodeId {
        self.push(name, ViewKind::Projection, None, schema, vec![child])
    }

    pub fn finish(self, roots: Vec<NodeId>) -> ViewTree {
        let free = self.q.free();
        let mut enumeration = Vec::with_capacity(roots.len());
        for &r in &roots {
            let mut set = Vec::new();
            if self.nodes[r].schema_set().is_subset(free) {
                let mut stack = vec![r];
                while let Some(n) = stack.pop() {
                    set.push(n);
                    for &c in self.nodes[n].children.iter().rev() {
                        if self.nodes[c].schema_set().is_subset(free) {
                            stack.push(c);
                        }
                    }
                }
            }
            enumeration.push(set);
        }
        ViewTree {
            nodes: self.nodes,
            roots,
            enumeration,
        }
    }
}

/// Compiles a variable order into a view tree.
///
/// For each variable `X`: a single atom child is used as is; a single view
/// child already has schema `{X} ∪ dep(X)` and is reused; otherwise the
/// children are joined into `V_X` over `{X} ∪ dep(X)`. Unless `X` is a root,
/// `X` is then projected away in `V'_X`. A root whose variable is bound (its
/// whole tree is bound, as the order is free-top) gets a nullary projection
/// `V'_X` so the tree can report whether it is satisfiable.
pub fn rewrite(q: &Query, vo: &VariableOrder) -> ViewTree {
    let dep = vo.dep(q);
    let free = q.free();
    let mut b = ViewTreeBuilder::new(q);
    fn build(q: &Query, vo: &VariableOrder, dep: &[VarSet], free: VarSet, x: Var, b: &mut ViewTreeBuilder) -> NodeId {
        let mut kids: Vec<NodeId> = vo.atoms_at(x).iter().map(|&a| b.atom(a)).collect();
        for &c in vo.children(x) {
            kids.push(build(q, vo, dep, free, c, b));
        }
        let name = q.var_name(x).to_string();
        let mut schema: Vec<Var> = dep[x.index()].iter().map(|v| Var(v as u32)).collect();
        schema.sort_by_key(|v| vo.depth(*v));
        let base = if kids.len() == 1 {
            kids[0]
        } else {
            let mut full = schema.clone();
            full.push(x);
            b.push(&format!("V_{name}"), ViewKind::Join, Some(x), full, kids)
        };
        let root = vo.parent(x).is_none();
        if !root || !free.contains(x.index()) {
            if root {
                schema.clear();
            }
            b.push(&format!("V'_{name}"), ViewKind::Projection, Some(x), schema, vec![base])
        } else {
            base
        }
    }
    let roots = vo
        .roots()
        .iter()
        .map(|&r| build(q, vo, &dep, free, r, &mut b))
        .collect();
    b.finish(roots)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SafetyViolation {
    /// The tree is not a well-formed rewriting.
    Structure(String),
    /// Atoms of one connected component sit in different trees.
    Component(Vec<String>),
    /// A projection drops a variable that occurs in an atom outside the
    /// projected subtree.
    Projection { view: String, atom: String },
    /// A dynamic view's schema misses variables of a sibling.
    Update { view: String, sibling: String },
    /// The root-connected free-only views do not cover the free variables.
    Enumeration(String),
}

/// All violations of the safety conditions; empty iff `t` is safe for `q`.
pub fn check_safe(t: &ViewTree, q: &Query) -> Vec<SafetyViolation> {
    let mut out = Vec::new();
    let mut seen = vec![0usize; q.body().len()];
    for n in t.nodes() {
        match n.kind {
            ViewKind::Atom(a) => {
                seen[a] += 1;
                if n.schema != q.atom(a).vars {
                    out.push(SafetyViolation::Structure(format!(
                        "{} does not match its atom",
                        n.name
                    )));
                }
            }
            ViewKind::Projection => {
                if n.children.len() != 1 {
                    out.push(SafetyViolation::Structure(format!(
                        "projection {} needs one child",
                        n.name
                    )));
                } else if !n.schema_set().is_subset(t.node(n.children[0]).schema_set()) {
                    out.push(SafetyViolation::Structure(format!(
                        "{} projects onto foreign variables",
                        n.name
                    )));
                }
            }
            ViewKind::Join => {
                let union = n
                    .children
                    .iter()
                    .fold(VarSet::EMPTY, |s, &c| s.union(t.node(c).schema_set()));
                if n.children.len() < 2 || union != n.schema_set() {
                    out.push(SafetyViolation::Structure(format!(
                        "{} is not the join of its children",
                        n.name
                    )));
                }
            }
        }
    }
    for (a, &k) in seen.iter().enumerate() {
        if k != 1 {
            out.push(SafetyViolation::Structure(format!(
                "atom {} occurs {k} times",
                q.fmt_atom(q.atom(a))
            )));
        }
    }
    if !out.is_empty() {
        return out;
    }

    let mut tree_of_atom = vec![0; q.body().len()];
    for &r in t.roots() {
        for a in t.leaves_below(r) {
            tree_of_atom[a] = r;
        }
    }
    for comp in q.components() {
        let first = tree_of_atom[comp.first().expect("non-empty component")];
        if comp.iter().any(|a| tree_of_atom[a] != first) {
            out.push(SafetyViolation::Component(
                comp.iter().map(|a| q.fmt_atom(q.atom(a))).collect(),
            ));
        }
    }

    for n in t.nodes().iter().filter(|n| n.kind == ViewKind::Projection) {
        let child = t.node(n.children[0]);
        let dropped = child.schema_set().minus(n.schema_set());
        let inside: HashSet<usize> = t.leaves_below(child.id).into_iter().collect();
        for (i, a) in q.body().iter().enumerate() {
            if a.var_set().intersects(dropped) && !inside.contains(&i) {
                out.push(SafetyViolation::Projection {
                    view: n.name.clone(),
                    atom: q.fmt_atom(a),
                });
            }
        }
    }

    for n in t.nodes().iter().filter(|n| n.is_dynamic) {
        let Some(p) = n.parent else { continue };
        for &s in &t.node(p).children {
            let sib = t.node(s);
            if s != n.id && !sib.schema_set().is_subset(n.schema_set()) {
                out.push(SafetyViolation::Update {
                    view: n.name.clone(),
                    sibling: sib.name.clone(),
                });
            }
        }
    }

    let mut covered = VarSet::EMPTY;
    for (root, set) in t.roots().iter().zip(t.enumeration_subtrees()) {
        if set.is_empty() {
            let bound = t.node(*root).schema_set().minus(q.free());
            out.push(SafetyViolation::Enumeration(format!(
                "root {} has bound variables {:?}",
                t.node(*root).name,
                q.names_of(bound)
            )));
        }
        for &n in set {
            covered = covered.union(t.node(n).schema_set());
        }
    }
    if covered != q.free() && out.iter().all(|v| !matches!(v, SafetyViolation::Enumeration(_))) {
        out.push(SafetyViolation::Enumeration(format!(
            "free variables {:?} are not reachable from a root",
            q.names_of(q.free().minus(covered))
        )));
    }
    out
}
