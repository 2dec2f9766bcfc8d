//! A stepper for the ordinary π-calculus with no notion of casts. It follows
//! the same scheduling conventions as the real runtime (thread layout, redex
//! order, fresh-name choice, seeded pick), so for cast-free programs the two
//! must print identical traces.

use std::collections::{BTreeMap, BTreeSet};

use gradual_pi::syntax::{Name, SurfaceProcess, Type};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum P {
    Nil,
    In(Name, Vec<(Name, Type)>, Box<P>),
    Out(Name, Vec<Name>, Box<P>),
    Par(Box<P>, Box<P>),
    Sum(Box<P>, Box<P>),
    New(Name, Type, Box<P>),
    Bang(Box<P>),
}

/// Reverse outputs become plain outputs; without `dyn` nothing else changes.
pub fn from_surface(p: &SurfaceProcess) -> P {
    match p {
        SurfaceProcess::Nil => P::Nil,
        SurfaceProcess::Input { subject, binders, body } => {
            P::In(subject.clone(), binders.clone(), Box::new(from_surface(body)))
        }
        SurfaceProcess::Output { subject, args, body } | SurfaceProcess::ReverseOutput { subject, args, body } => {
            P::Out(subject.clone(), args.clone(), Box::new(from_surface(body)))
        }
        SurfaceProcess::Par(l, r) => P::Par(Box::new(from_surface(l)), Box::new(from_surface(r))),
        SurfaceProcess::Choice(l, r) => P::Sum(Box::new(from_surface(l)), Box::new(from_surface(r))),
        SurfaceProcess::Restrict { name, ty, body } => P::New(name.clone(), ty.clone(), Box::new(from_surface(body))),
        SurfaceProcess::Replicate(body) => P::Bang(Box::new(from_surface(body))),
    }
}

fn level(p: &P) -> u8 {
    match p {
        P::Par(..) => 0,
        P::Sum(..) => 1,
        _ => 2,
    }
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(", ")
}

fn show_at(p: &P, at: u8) -> String {
    let text = match p {
        P::Nil => "0".to_string(),
        P::In(a, bs, body) => {
            let bs: Vec<String> = bs.iter().map(|(n, t)| format!("{n}:{t}")).collect();
            format!("{a}?({}).{}", bs.join(", "), show_at(body, 2))
        }
        P::Out(a, xs, body) => format!("{a}!<{}>.{}", join(xs), show_at(body, 2)),
        P::Par(l, r) => format!("{} | {}", show_at(l, 1), show_at(r, 0)),
        P::Sum(l, r) => format!("{} + {}", show_at(l, 2), show_at(r, 1)),
        P::New(n, t, body) => format!("new ({n}:{t}) {}", show_at(body, 2)),
        P::Bang(body) => format!("!{}", show_at(body, 2)),
    };
    if level(p) < at {
        format!("({text})")
    } else {
        text
    }
}

pub fn show(p: &P) -> String {
    show_at(p, 0)
}

/// Rendering that ignores the choice of bound names: a bound occurrence is
/// printed as its distance to the binder.
fn canon(p: &P, bound: &mut Vec<Name>) -> String {
    let name = |n: &Name, bound: &Vec<Name>| match bound.iter().rev().position(|b| b == n) {
        Some(k) => format!("@{k}"),
        None => format!("{n}"),
    };
    match p {
        P::Nil => "0".into(),
        P::In(a, bs, body) => {
            let subject = name(a, bound);
            let types: Vec<String> = bs.iter().map(|(_, t)| t.to_string()).collect();
            bound.extend(bs.iter().map(|(n, _)| n.clone()));
            let body = canon(body, bound);
            bound.truncate(bound.len() - bs.len());
            format!("{subject}?({}).{body}", types.join(","))
        }
        P::Out(a, xs, body) => {
            let xs: Vec<String> = xs.iter().map(|x| name(x, bound)).collect();
            format!("{}!<{}>.{}", name(a, bound), xs.join(","), canon(body, bound))
        }
        P::Par(l, r) => format!("({} | {})", canon(l, bound), canon(r, bound)),
        P::Sum(l, r) => format!("({} + {})", canon(l, bound), canon(r, bound)),
        P::New(n, t, body) => {
            bound.push(n.clone());
            let body = canon(body, bound);
            bound.pop();
            format!("new {t}.{body}")
        }
        P::Bang(body) => format!("!{}", canon(body, bound)),
    }
}

fn thread_text(p: &P) -> String {
    match p {
        P::Par(..) | P::Sum(..) => format!("({})", show(p)),
        _ => show(p),
    }
}

fn free(p: &P) -> BTreeSet<Name> {
    let mut out = BTreeSet::new();
    match p {
        P::Nil => {}
        P::In(a, bs, body) => {
            out.insert(a.clone());
            let mut inner = free(body);
            for (b, _) in bs {
                inner.remove(b);
            }
            out.extend(inner);
        }
        P::Out(a, xs, body) => {
            out.insert(a.clone());
            out.extend(xs.iter().cloned());
            out.extend(free(body));
        }
        P::Par(l, r) | P::Sum(l, r) => {
            out.extend(free(l));
            out.extend(free(r));
        }
        P::New(n, _, body) => {
            let mut inner = free(body);
            inner.remove(n);
            out.extend(inner);
        }
        P::Bang(body) => out.extend(free(body)),
    }
    out
}

fn smallest_free(base: &Name, from: u32, avoid: &BTreeSet<Name>) -> Name {
    (from..)
        .map(|k| Name::with_index(base.base.clone(), k))
        .find(|n| !avoid.contains(n))
        .expect("unbounded indices")
}

type Map = BTreeMap<Name, Name>;

/// Go under `binders`: drop shadowed keys; rename a binder that would catch
/// one of the incoming names.
fn under(binders: &[Name], body: &P, map: &Map) -> (Vec<Name>, Map) {
    let mut inner: Map = map
        .iter()
        .filter(|(k, _)| !binders.contains(k))
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    if inner.is_empty() {
        return (binders.to_vec(), inner);
    }
    let incoming: BTreeSet<Name> = map.values().cloned().collect();
    let body_free = free(body);
    let live = inner.keys().any(|k| body_free.contains(k));
    let mut avoid = body_free;
    avoid.extend(incoming.iter().cloned());
    avoid.extend(inner.keys().cloned());
    avoid.extend(binders.iter().cloned());
    let mut names = Vec::new();
    for b in binders {
        if live && incoming.contains(b) {
            let fresh = smallest_free(b, b.index + 1, &avoid);
            avoid.insert(fresh.clone());
            inner.insert(b.clone(), fresh.clone());
            names.push(fresh);
        } else {
            names.push(b.clone());
        }
    }
    (names, inner)
}

pub fn subst(p: &P, map: &Map) -> P {
    if map.is_empty() {
        return p.clone();
    }
    let get = |n: &Name| map.get(n).cloned().unwrap_or_else(|| n.clone());
    match p {
        P::Nil => P::Nil,
        P::In(a, bs, body) => {
            let names: Vec<Name> = bs.iter().map(|(n, _)| n.clone()).collect();
            let (names, inner) = under(&names, body, map);
            let bs = names.into_iter().zip(bs.iter().map(|(_, t)| t.clone())).collect();
            P::In(get(a), bs, Box::new(subst(body, &inner)))
        }
        P::Out(a, xs, body) => P::Out(get(a), xs.iter().map(get).collect(), Box::new(subst(body, map))),
        P::Par(l, r) => P::Par(Box::new(subst(l, map)), Box::new(subst(r, map))),
        P::Sum(l, r) => P::Sum(Box::new(subst(l, map)), Box::new(subst(r, map))),
        P::New(n, t, body) => {
            let (names, inner) = under(std::slice::from_ref(n), body, map);
            P::New(names[0].clone(), t.clone(), Box::new(subst(body, &inner)))
        }
        P::Bang(body) => P::Bang(Box::new(subst(body, map))),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Step {
    Left(usize),
    Right(usize),
    Unfold(usize),
    Comm(usize, usize),
}

#[derive(Clone, Debug)]
pub struct Twin {
    pub restricted: Vec<Name>,
    pub threads: Vec<P>,
    reserved: BTreeSet<Name>,
}

impl Twin {
    pub fn new(p: &P) -> Twin {
        let mut twin = Twin {
            restricted: Vec::new(),
            threads: Vec::new(),
            reserved: free(p),
        };
        let mut threads = Vec::new();
        twin.flatten(p.clone(), &mut threads);
        twin.threads = threads;
        twin
    }

    fn flatten(&mut self, p: P, out: &mut Vec<P>) {
        match p {
            P::Nil => {}
            P::Par(l, r) => {
                self.flatten(*l, out);
                self.flatten(*r, out);
            }
            P::New(n, _, body) => {
                let mut avoid = self.reserved.clone();
                avoid.extend(self.restricted.iter().cloned());
                let fresh = if avoid.contains(&n) {
                    smallest_free(&n, n.index + 1, &avoid)
                } else {
                    n.clone()
                };
                let body = if fresh == n {
                    *body
                } else {
                    subst(&body, &[(n, fresh.clone())].into_iter().collect())
                };
                self.restricted.push(fresh);
                self.flatten(body, out);
            }
            other => out.push(other),
        }
    }

    fn replace(&mut self, mut with: Vec<(usize, P)>) {
        with.sort_by_key(|(k, _)| *k);
        let old = std::mem::take(&mut self.threads);
        let mut threads = Vec::new();
        for (k, t) in old.into_iter().enumerate() {
            match with.iter().position(|(i, _)| *i == k) {
                Some(w) => {
                    let mut flat = Vec::new();
                    self.flatten(with[w].1.clone(), &mut flat);
                    threads.extend(flat);
                }
                None => threads.push(t),
            }
        }
        self.threads = threads;
    }

    fn heads(p: &P, private: &mut Vec<Name>, out: &mut Vec<(Name, bool, bool)>) {
        match p {
            P::In(a, ..) => out.push((a.clone(), true, private.contains(a))),
            P::Out(a, ..) => out.push((a.clone(), false, private.contains(a))),
            P::Par(l, r) | P::Sum(l, r) => {
                Self::heads(l, private, out);
                Self::heads(r, private, out);
            }
            P::New(n, _, body) => {
                private.push(n.clone());
                Self::heads(body, private, out);
                private.pop();
            }
            P::Bang(body) => Self::heads(body, private, out),
            P::Nil => {}
        }
    }

    fn may_unfold(&self, at: usize, body: &P) -> bool {
        let mut mine = Vec::new();
        Self::heads(body, &mut Vec::new(), &mut mine);
        let mut others = Vec::new();
        for (k, t) in self.threads.iter().enumerate() {
            if k != at {
                Self::heads(t, &mut Vec::new(), &mut others);
            }
        }
        others.extend(mine.iter().filter(|h| !h.2).cloned());
        let wanted = mine.iter().any(|(n, is_in, private)| {
            let pool = if *private { &mine } else { &others };
            pool.iter().any(|(m, i2, p2)| m == n && i2 != is_in && p2 == private)
        });
        if !wanted {
            return false;
        }
        // Hold off while an identical idle copy is still around.
        let mut scratch = self.clone();
        let mut copy = Vec::new();
        scratch.flatten(body.clone(), &mut copy);
        let mask: Map = scratch.restricted.iter().map(|n| (n.clone(), Name::new("%"))).collect();
        let mut existing: Vec<String> = self
            .threads
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != at)
            .map(|(_, t)| canon(&subst(t, &mask), &mut Vec::new()))
            .collect();
        !copy.iter().all(|t| {
            let s = canon(&subst(t, &mask), &mut Vec::new());
            match existing.iter().position(|e| *e == s) {
                Some(k) => {
                    existing.swap_remove(k);
                    true
                }
                None => false,
            }
        })
    }

    pub fn enabled(&self) -> Vec<Step> {
        let mut out = Vec::new();
        for (i, t) in self.threads.iter().enumerate() {
            match t {
                P::Sum(..) => {
                    out.push(Step::Left(i));
                    out.push(Step::Right(i));
                }
                P::Bang(body) => {
                    if self.may_unfold(i, body) {
                        out.push(Step::Unfold(i));
                    }
                }
                P::In(a, ..) => {
                    for (j, u) in self.threads.iter().enumerate() {
                        if matches!(u, P::Out(b, ..) if b == a) {
                            out.push(Step::Comm(i, j));
                        }
                    }
                }
                _ => {}
            }
        }
        out
    }

    pub fn fire(&mut self, step: &Step, trace: &mut Vec<String>) {
        let mut log = |rule: &str, before: String, after: String| {
            trace.push(format!("#{} [{rule}] {before} --> {after}", trace.len() + 1));
        };
        match step {
            Step::Left(i) | Step::Right(i) => {
                let P::Sum(l, r) = self.threads[*i].clone() else { unreachable!() };
                let chosen = if matches!(step, Step::Left(_)) { *l } else { *r };
                log("choice", thread_text(&self.threads[*i]), thread_text(&chosen));
                self.replace(vec![(*i, chosen)]);
            }
            Step::Unfold(i) => {
                let bang = self.threads[*i].clone();
                let P::Bang(body) = bang.clone() else { unreachable!() };
                let unfolded = P::Par(Box::new(bang.clone()), body);
                log("replicate", thread_text(&bang), show(&unfolded));
                self.replace(vec![(*i, unfolded)]);
            }
            Step::Comm(i, j) => {
                let P::In(_, bs, body) = self.threads[*i].clone() else { unreachable!() };
                let P::Out(_, xs, rest) = self.threads[*j].clone() else { unreachable!() };
                let map: Map = bs.iter().map(|(n, _)| n.clone()).zip(xs).collect();
                let got = subst(&body, &map);
                let order = |a: &P, b: &P| -> Vec<P> {
                    if i < j {
                        vec![a.clone(), b.clone()]
                    } else {
                        vec![b.clone(), a.clone()]
                    }
                };
                let before: Vec<String> = order(&self.threads[*i], &self.threads[*j]).iter().map(thread_text).collect();
                let after: Vec<String> = order(&got, &rest)
                    .iter()
                    .filter(|p| **p != P::Nil)
                    .map(thread_text)
                    .collect();
                let after = if after.is_empty() { "0".to_string() } else { after.join(" | ") };
                log("comm", before.join(" | "), after);
                self.replace(vec![(*i, got), (*j, *rest)]);
            }
        }
    }

    /// Trace lines followed by the HALT line.
    pub fn run_seeded(mut self, seed: u64, max_steps: usize) -> Vec<String> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut trace = Vec::new();
        let mut steps = 0;
        loop {
            let enabled = self.enabled();
            if enabled.is_empty() {
                trace.push("HALT: normal-stuck".to_string());
                return trace;
            }
            if steps >= max_steps {
                trace.push("HALT: max-steps".to_string());
                return trace;
            }
            let pick = rng.gen_range(0..enabled.len());
            self.fire(&enabled[pick], &mut trace);
            steps += 1;
        }
    }
}
