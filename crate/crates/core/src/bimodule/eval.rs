//! Evaluation of parsed diagrams against `(r, r̄)` and named boxes.
//!
//! A central box is an element of `End(1_X)`; when its binding does not name
//! `X`, the object is taken from the horizontal neighbours, then from the
//! adjacent stages, and finally from the only object whose block count
//! matches the values.

use std::collections::HashMap;

use super::diagram::Diagram;
use super::duality::DualityPair;
use super::intertwiner::Intertwiner;
use super::word::{Object, Word};
use crate::error::{Error, Result};
use crate::linalg::C64;

#[derive(Debug, Clone)]
pub enum Binding {
    Intertwiner(Intertwiner),
    Central { values: Vec<C64>, object: Option<Object> },
}

#[derive(Debug, Clone, Default)]
pub struct Bindings {
    map: HashMap<String, Binding>,
}

impl Bindings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, b: Binding) -> &mut Self {
        self.map.insert(name.into(), b);
        self
    }

    pub fn intertwiner(&mut self, name: impl Into<String>, t: Intertwiner) -> &mut Self {
        self.insert(name, Binding::Intertwiner(t))
    }

    pub fn central(&mut self, name: impl Into<String>, values: Vec<C64>, object: Option<Object>) -> &mut Self {
        self.insert(name, Binding::Central { values, object })
    }

    pub fn get(&self, name: &str) -> Result<&Binding> {
        self.map.get(name).ok_or_else(|| Error::Unbound(name.to_string()))
    }
}

#[derive(Debug, Clone)]
enum Ty {
    Known(Word, Word),
    /// Central boxes whose common object is still open.
    Free(Vec<usize>),
}

struct Typer<'a> {
    bindings: &'a Bindings,
    objects: Vec<Option<Object>>,
    boxes: Vec<(String, usize)>,
}

fn unit_ty(x: Object) -> Ty {
    Ty::Known(Word::unit(x), Word::unit(x))
}

impl Typer<'_> {
    fn fix(&mut self, ids: &[usize], x: Object) -> Ty {
        for &id in ids {
            self.objects[id] = Some(x);
        }
        unit_ty(x)
    }

    fn ty(&mut self, d: &Diagram, counter: &mut usize) -> Result<Ty> {
        Ok(match d {
            Diagram::Id(w) => Ty::Known(w.clone(), w.clone()),
            Diagram::R => Ty::Known(Word::unit(Object::N), Word::parse("ibar i")?),
            Diagram::RBar => Ty::Known(Word::unit(Object::M), Word::parse("i ibar")?),
            Diagram::Adjoint(inner) => match self.ty(inner, counter)? {
                Ty::Known(s, t) => Ty::Known(t, s),
                free => free,
            },
            Diagram::Box(name) => {
                let id = *counter;
                *counter += 1;
                self.objects.push(None);
                match self.bindings.get(name)? {
                    Binding::Intertwiner(t) => Ty::Known(t.source().clone(), t.target().clone()),
                    Binding::Central { values, object } => {
                        self.boxes.push((name.clone(), values.len()));
                        match object {
                            Some(x) => self.fix(&[id], *x),
                            None => Ty::Free(vec![id]),
                        }
                    }
                }
            }
            Diagram::Horizontal(parts) => {
                let mut tys = Vec::new();
                for p in parts {
                    tys.push(self.ty(p, counter)?);
                }
                self.horizontal(tys)?
            }
            Diagram::Vertical(parts) => {
                let mut tys = Vec::new();
                for p in parts {
                    tys.push(self.ty(p, counter)?);
                }
                self.vertical(tys)?
            }
        })
    }

    fn horizontal(&mut self, mut tys: Vec<Ty>) -> Result<Ty> {
        loop {
            let mut changed = false;
            for k in 0..tys.len() {
                let Ty::Free(ids) = &tys[k] else { continue };
                let from_left = k.checked_sub(1).and_then(|j| match &tys[j] {
                    Ty::Known(s, _) => Some(s.source()),
                    Ty::Free(_) => None,
                });
                let from_right = tys.get(k + 1).and_then(|t| match t {
                    Ty::Known(s, _) => Some(s.target()),
                    Ty::Free(_) => None,
                });
                if let Some(x) = from_left.or(from_right) {
                    let ids = ids.clone();
                    tys[k] = self.fix(&ids, x);
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        if tys.iter().all(|t| matches!(t, Ty::Free(_))) {
            return Ok(Ty::Free(tys.into_iter().flat_map(|t| if let Ty::Free(v) = t { v } else { vec![] }).collect()));
        }
        let mut acc: Option<(Word, Word)> = None;
        for t in tys {
            let Ty::Known(s, tt) = t else { unreachable!("all factors resolved") };
            acc = Some(match acc {
                None => (s, tt),
                Some((s0, t0)) => {
                    if s0.source() != s.target() {
                        return Err(Error::Type(format!(
                            "cannot place `{s0}` ⇒ `{t0}` beside `{s}` ⇒ `{tt}`: objects {} and {} differ",
                            s0.source(),
                            s.target()
                        )));
                    }
                    (s0.concat(&s)?, t0.concat(&tt)?)
                }
            });
        }
        let (s, t) = acc.expect("non-empty stage");
        Ok(Ty::Known(s, t))
    }

    fn vertical(&mut self, mut tys: Vec<Ty>) -> Result<Ty> {
        let unit_object = |w: &Word| -> Result<Object> {
            if w.is_unit() {
                Ok(w.source())
            } else {
                Err(Error::Type(format!("a central box cannot meet the word `{w}`")))
            }
        };
        loop {
            let mut changed = false;
            for k in 0..tys.len() {
                let Ty::Free(ids) = &tys[k] else { continue };
                let above = k.checked_sub(1).and_then(|j| match &tys[j] {
                    Ty::Known(_, t) => Some(t.clone()),
                    Ty::Free(_) => None,
                });
                let below = tys.get(k + 1).and_then(|t| match t {
                    Ty::Known(s, _) => Some(s.clone()),
                    Ty::Free(_) => None,
                });
                if let Some(w) = above.or(below) {
                    let ids = ids.clone();
                    tys[k] = self.fix(&ids, unit_object(&w)?);
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        if tys.iter().all(|t| matches!(t, Ty::Free(_))) {
            return Ok(Ty::Free(tys.into_iter().flat_map(|t| if let Ty::Free(v) = t { v } else { vec![] }).collect()));
        }
        let mut acc: Option<(Word, Word)> = None;
        for t in tys {
            let Ty::Known(s, tt) = t else { unreachable!("all stages resolved") };
            acc = Some(match acc {
                None => (s, tt),
                Some((s0, t0)) => {
                    if t0 != s {
                        return Err(Error::Type(format!("stage produces `{t0}` but the next stage expects `{s}`")));
                    }
                    (s0, tt)
                }
            });
        }
        let (s, t) = acc.expect("non-empty diagram");
        Ok(Ty::Known(s, t))
    }
}

/// Source and target words of a diagram, with the object chosen for each
/// central box in order of appearance.
pub fn infer_types(d: &Diagram, bindings: &Bindings, counts: (usize, usize)) -> Result<(Word, Word, Vec<Object>)> {
    let mut typer = Typer { bindings, objects: Vec::new(), boxes: Vec::new() };
    let mut counter = 0;
    let ty = typer.ty(d, &mut counter)?;
    let (s, t) = match ty {
        Ty::Known(s, t) => (s, t),
        Ty::Free(ids) => {
            let fits = |k: usize| typer.boxes.iter().all(|(_, len)| *len == k);
            let x = match (fits(counts.0), fits(counts.1)) {
                (true, false) => Object::N,
                (false, true) => Object::M,
                _ => {
                    let names: Vec<&str> = typer.boxes.iter().map(|(n, _)| n.as_str()).collect();
                    return Err(Error::Type(format!(
                        "cannot infer whether boxes {names:?} live on N or M; set \"object\" in their bindings"
                    )));
                }
            };
            typer.fix(&ids, x);
            (Word::unit(x), Word::unit(x))
        }
    };
    let objects = typer.objects.into_iter().map(|o| o.expect("every box resolved")).collect();
    Ok((s, t, objects))
}

fn eval_rec(d: &Diagram, pair: &DualityPair, bindings: &Bindings, objects: &[Object], counter: &mut usize) -> Result<Intertwiner> {
    let cat = pair.category();
    Ok(match d {
        Diagram::Id(w) => Intertwiner::identity(cat, w),
        Diagram::R => pair.r.clone(),
        Diagram::RBar => pair.rbar.clone(),
        Diagram::Adjoint(inner) => eval_rec(inner, pair, bindings, objects, counter)?.adjoint(),
        Diagram::Box(name) => {
            let id = *counter;
            *counter += 1;
            match bindings.get(name)? {
                Binding::Intertwiner(t) => t.clone(),
                Binding::Central { values, .. } => Intertwiner::central(cat, objects[id], values)
                    .map_err(|e| Error::Type(format!("box `{name}`: {e}")))?,
            }
        }
        Diagram::Horizontal(parts) => {
            let mut acc: Option<Intertwiner> = None;
            for p in parts {
                let t = eval_rec(p, pair, bindings, objects, counter)?;
                acc = Some(match acc {
                    None => t,
                    Some(a) => a.tensor(&t)?,
                });
            }
            acc.expect("non-empty stage")
        }
        Diagram::Vertical(parts) => {
            let mut acc: Option<Intertwiner> = None;
            for p in parts {
                let t = eval_rec(p, pair, bindings, objects, counter)?;
                acc = Some(match acc {
                    None => t,
                    Some(a) => t.compose(&a)?,
                });
            }
            acc.expect("non-empty diagram")
        }
    })
}

/// Evaluates `d` with `r`, `r̄` taken from `pair`.
pub fn eval_diagram(d: &Diagram, pair: &DualityPair, bindings: &Bindings) -> Result<Intertwiner> {
    let cat = pair.category();
    let counts = (cat.num_blocks(Object::N), cat.num_blocks(Object::M));
    let (_, _, objects) = infer_types(d, bindings, counts)?;
    let mut counter = 0;
    eval_rec(d, pair, bindings, &objects, &mut counter)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bimodule::diagram::parse_diagram;
    use crate::bimodule::duality::build_duality;
    use crate::fixtures;
    use crate::linalg::c;

    #[test]
    fn conjugate_equation_evaluates_to_identity() {
        let pair = build_duality(&fixtures::trace_of(&fixtures::f1())).unwrap();
        let d = parse_diagram("(id(i) | r) ; (rbar* | id(i))").unwrap();
        let v = eval_diagram(&d, &pair, &Bindings::new()).unwrap();
        let id = Intertwiner::identity(pair.category(), &Word::iota());
        assert!(v.distance(&id).unwrap() < 1e-9);
        let v = eval_diagram(&parse_diagram("id(i)").unwrap(), &pair, &Bindings::new()).unwrap();
        assert!(v.distance(&id).unwrap() < 1e-15);
    }

    #[test]
    fn double_loop_on_f3() {
        let pair = build_duality(&fixtures::f3_expectation(0.25)).unwrap();
        let rr = pair.r_norm().unwrap();
        let mut b = Bindings::new();
        b.central("rstar_rr", rr.scalars().to_vec(), None);
        let d = parse_diagram("rbar ; (id(i) | rstar_rr | id(ibar)) ; rbar*").unwrap();
        let v = eval_diagram(&d, &pair, &b).unwrap().central_values().unwrap();
        assert!((v[0].re - 4.0).abs() < 1e-9 && (v[1].re - 4.0 / 3.0).abs() < 1e-9);
        let d = parse_diagram("r ; (id(ibar) | (rbar ; (id(i) | box(z) | id(ibar)) ; rbar*) | id(i)) ; r*").unwrap();
        let mut b = Bindings::new();
        b.central("z", vec![c(1.0)], None);
        let v = eval_diagram(&d, &pair, &b).unwrap().central_values().unwrap();
        assert!((v[0].re - 2.0).abs() < 1e-9);
    }

    #[test]
    fn inference_and_errors() {
        let pair = build_duality(&fixtures::f3_expectation(0.5)).unwrap();
        let mut b = Bindings::new();
        b.central("a", vec![c(2.0), c(3.0)], None);
        b.central("n", vec![c(5.0)], None);
        let v = eval_diagram(&parse_diagram("a ; a").unwrap(), &pair, &b).unwrap();
        assert_eq!(v.source(), &Word::unit(Object::M));
        assert_eq!(v.central_values().unwrap()[1], c(9.0));
        let v = eval_diagram(&parse_diagram("r ; (n | id(ibar i))").unwrap(), &pair, &b).unwrap();
        assert_eq!(v.target(), &Word::parse("ibar i").unwrap());
        assert!(matches!(eval_diagram(&parse_diagram("q").unwrap(), &pair, &b), Err(Error::Unbound(_))));
        let err = eval_diagram(&parse_diagram("r ; rbar*").unwrap(), &pair, &b).unwrap_err().to_string();
        assert!(err.contains("ibar i") && err.contains("i ibar"), "{err}");
        assert!(matches!(eval_diagram(&parse_diagram("r | rbar").unwrap(), &pair, &b), Err(Error::Type(_))));
        let mut amb = Bindings::new();
        amb.central("z", vec![c(1.0)], None);
        let f1 = build_duality(&fixtures::trace_of(&fixtures::f1())).unwrap();
        assert!(matches!(eval_diagram(&parse_diagram("z").unwrap(), &f1, &amb), Err(Error::Type(_))));
        amb.central("z", vec![c(1.0)], Some(Object::M));
        assert!(eval_diagram(&parse_diagram("z").unwrap(), &f1, &amb).is_ok());
    }
}
