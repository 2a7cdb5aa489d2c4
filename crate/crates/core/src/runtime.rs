//! One entry point for maintaining a query: a view-tree engine for the
//! well-behaved classes and a transition system for the rest of `C_exp`.

use serde_json::json;

use crate::classify::{classify, Class};
use crate::data::{Database, Interner, Tuple};
use crate::engine::Engine;
use crate::error::{Error, Result};
use crate::parser::UpdateEvent;
use crate::query::Query;
use crate::rewrite::rewrite;
use crate::transition::{StateId, TransitionConfig, TransitionSystem};
use crate::width::{preprocessing_width_with, WidthConfig, WidthResult};

#[derive(Clone, Copy, Debug, Default)]
pub struct RuntimeConfig {
    pub width: WidthConfig,
    pub transition: TransitionConfig,
}

pub enum Runtime {
    Engine {
        engine: Box<Engine>,
        class: Class,
        width: Box<WidthResult>,
    },
    Transition {
        system: Box<TransitionSystem>,
        current: StateId,
    },
}

impl Runtime {
    pub fn new(q: &Query, db: &Database) -> Result<Runtime> {
        Self::with_config(q, db, &RuntimeConfig::default())
    }

    pub fn with_config(q: &Query, db: &Database, cfg: &RuntimeConfig) -> Result<Runtime> {
        let class = classify(q).class;
        match class {
            Class::Lin | Class::Poly => {
                let width = preprocessing_width_with(q, &cfg.width)?;
                let plan = rewrite(q, &width.vo);
                let engine = Engine::materialize(q, plan, db)?;
                Ok(Runtime::Engine {
                    engine: Box::new(engine),
                    class,
                    width: Box::new(width),
                })
            }
            Class::Exp => {
                let system = TransitionSystem::build_with(q, db, &cfg.transition)?;
                let current = system.initial();
                Ok(Runtime::Transition {
                    system: Box::new(system),
                    current,
                })
            }
            Class::Outside => Err(Error::WrongClass {
                class: class.to_string(),
                needed: "C_exp",
            }),
        }
    }

    pub fn class(&self) -> Class {
        match self {
            Runtime::Engine { class, .. } => *class,
            Runtime::Transition { .. } => Class::Exp,
        }
    }

    pub fn interner(&self) -> &Interner {
        match self {
            Runtime::Engine { engine, .. } => engine.interner(),
            Runtime::Transition { system, .. } => system.interner(),
        }
    }

    /// Applies inserts and deletes; enumerate and checkpoint events are
    /// left to the caller.
    pub fn apply(&mut self, ev: &UpdateEvent) -> Result<()> {
        match self {
            Runtime::Engine { engine, .. } => engine.apply(ev),
            Runtime::Transition { system, current } => {
                *current = system.apply_update(*current, ev)?;
                Ok(())
            }
        }
    }

    /// Result tuples over the head variables, in no particular order.
    pub fn enumerate(&self) -> Box<dyn Iterator<Item = Tuple> + '_> {
        match self {
            Runtime::Engine { engine, .. } => Box::new(engine.enumerate()),
            Runtime::Transition { system, current } => Box::new(system.enumerate(*current).cloned()),
        }
    }

    /// Result tuples, sorted.
    pub fn result(&self) -> Vec<Tuple> {
        let mut v: Vec<Tuple> = self.enumerate().collect();
        v.sort_unstable();
        v
    }

    /// Result rows as strings, sorted.
    pub fn result_strings(&self) -> Vec<Vec<String>> {
        let i = self.interner();
        let mut v: Vec<Vec<String>> = self.enumerate().map(|t| i.resolve_tuple(&t)).collect();
        v.sort();
        v
    }

    pub fn stats_json(&self) -> serde_json::Value {
        match self {
            Runtime::Engine { engine, class, width } => json!({
                "runtime": "view_tree",
                "class": class,
                "preprocessing_width": width.width,
                "views": engine.plan().nodes().len(),
                "stats": engine.stats(),
            }),
            Runtime::Transition { system, current } => json!({
                "runtime": "transition_system",
                "class": Class::Exp,
                "mode": system.mode(),
                "max_dynamic_facts": system.max_dynamic_database().len(),
                "states": system.num_states(),
                "current_state": current,
                "result_size": system.result(*current).len(),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dispatch() {
        let mut db = Database::new();
        db.insert_str("S", &["a1", "b1"]);
        db.insert_str("R", &["a1"]);
        let q3 = Query::parse("Q3(A,B) := R@d(A), S@s(A,B), T@d(B).").unwrap();
        let mut rt = Runtime::new(&q3, &db).unwrap();
        assert_eq!(rt.class(), Class::Exp);
        assert!(rt.result().is_empty());
        rt.apply(&UpdateEvent::Insert {
            relation: "T".into(),
            tuple: vec!["b1".into()],
        })
        .unwrap();
        assert_eq!(rt.result_strings(), vec![vec!["a1", "b1"]]);

        let q1 = Query::parse("Q(A,B,C) := R@d(A,D), S@d(A,B), T@s(B,C).").unwrap();
        let rt = Runtime::new(&q1, &Database::new()).unwrap();
        assert_eq!(rt.class(), Class::Lin);
        assert_eq!(rt.stats_json()["preprocessing_width"], "1");

        let q4 = Query::parse("Q4(A,B,C) := R@d(A,B), S@d(A,C), T@s(B,C).").unwrap();
        assert!(matches!(
            Runtime::new(&q4, &Database::new()),
            Err(Error::WrongClass { .. })
        ));
    }
}
