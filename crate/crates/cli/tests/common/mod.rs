//! Random program generation and a plain π-calculus stepper used as a
//! differential reference.

#![allow(dead_code)]

pub mod twin;

use gradual_pi::castinsert::reverse_type;
use gradual_pi::syntax::{Capability, Name, SurfaceProcess, Type, TypeEnv};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const GLOBALS: [&str; 4] = ["a", "b", "c", "d"];

#[derive(Clone, Debug)]
pub struct Settings {
    pub allow_dyn: bool,
    pub allow_reverse: bool,
    /// Probability that a prefix ignores the types in scope.
    pub noise: f64,
    pub max_depth: u32,
    pub blocks: usize,
}

/// One `decl* run P` block.
#[derive(Clone, Debug)]
pub struct Block {
    pub env: TypeEnv,
    pub proc: SurfaceProcess,
}

pub struct Generator {
    rng: ChaCha8Rng,
    settings: Settings,
    fresh: usize,
}

impl Generator {
    pub fn new(seed: u64, settings: Settings) -> Generator {
        Generator {
            rng: ChaCha8Rng::seed_from_u64(seed),
            settings,
            fresh: 0,
        }
    }

    fn chance(&mut self, p: f64) -> bool {
        self.rng.gen_bool(p)
    }

    fn fresh(&mut self, base: &str) -> Name {
        self.fresh += 1;
        Name::new(format!("{base}{}", self.fresh))
    }

    pub fn ty(&mut self, depth: u32) -> Type {
        if self.settings.allow_dyn && self.chance(0.25) {
            return Type::Dyn;
        }
        let cap = if self.chance(0.5) {
            Capability::Input
        } else {
            Capability::Output
        };
        let arity = if depth == 0 { 0 } else { self.rng.gen_range(0..=2) };
        let args = (0..arity).map(|_| self.ty(depth - 1)).collect();
        Type::Chan(cap, args)
    }

    /// Payload types of the shared channels; each block picks a capability
    /// per channel so that blocks can talk to each other.
    pub fn universe(&mut self) -> Vec<(Name, Vec<Type>)> {
        GLOBALS
            .iter()
            .map(|g| {
                let arity = self.rng.gen_range(0..=2);
                (Name::new(*g), (0..arity).map(|_| self.ty(1)).collect())
            })
            .collect()
    }

    pub fn system(&mut self) -> Vec<Block> {
        let universe = self.universe();
        (0..self.settings.blocks).map(|_| self.block(&universe)).collect()
    }

    pub fn block(&mut self, universe: &[(Name, Vec<Type>)]) -> Block {
        let mut env = TypeEnv::new();
        for (name, payload) in universe {
            let ty = if self.settings.allow_dyn && self.chance(0.15) {
                Type::Dyn
            } else if self.chance(0.5) {
                Type::input(payload.clone())
            } else {
                Type::output(payload.clone())
            };
            env.extend(name.clone(), ty);
        }
        let scope: Vec<(Name, Type)> = env.iter().cloned().collect();
        let depth = self.settings.max_depth;
        let proc = SurfaceProcess::par(self.process(depth, &scope), self.process(depth, &scope));
        Block { env, proc }
    }

    fn process(&mut self, depth: u32, scope: &[(Name, Type)]) -> SurfaceProcess {
        if depth == 0 {
            return SurfaceProcess::Nil;
        }
        let roll = self.rng.gen_range(0..100);
        match roll {
            0..=9 => SurfaceProcess::Nil,
            10..=59 => self.prefix(depth, scope),
            60..=74 => SurfaceProcess::par(self.process(depth - 1, scope), self.process(depth - 1, scope)),
            75..=86 => SurfaceProcess::choice(self.prefix(depth, scope), self.prefix(depth, scope)),
            87..=94 => {
                let name = self.fresh("n");
                let ty = self.ty(1);
                let mut inner = scope.to_vec();
                inner.push((name.clone(), ty.clone()));
                SurfaceProcess::restrict(name, ty, self.process(depth - 1, &inner))
            }
            _ => SurfaceProcess::replicate(self.prefix(depth, scope)),
        }
    }

    /// Names in scope whose type is exactly `t`.
    fn having(scope: &[(Name, Type)], t: &Type) -> Vec<Name> {
        // Innermost binding wins, so only keep names not shadowed later.
        let mut out = Vec::new();
        for (k, (n, ty)) in scope.iter().enumerate() {
            let shadowed = scope[k + 1..].iter().any(|(m, _)| m == n);
            if !shadowed && ty == t {
                out.push(n.clone());
            }
        }
        out
    }

    fn prefix(&mut self, depth: u32, scope: &[(Name, Type)]) -> SurfaceProcess {
        let noisy = self.chance(self.settings.noise);
        // Shared channels are the only ones other blocks can talk on.
        let shared = &scope[..GLOBALS.len().min(scope.len())];
        let pool = if self.chance(0.6) { shared } else { scope };
        let (subject, subject_ty) = pool.choose(&mut self.rng).cloned().expect("non-empty scope");
        let (cap, payload) = match &subject_ty {
            Type::Chan(cap, args) if !noisy => (*cap, args.clone()),
            _ => {
                let cap = if self.chance(0.5) {
                    Capability::Input
                } else {
                    Capability::Output
                };
                let arity = self.rng.gen_range(0..=2);
                (cap, (0..arity).map(|_| self.ty(1)).collect())
            }
        };
        match cap {
            Capability::Input => {
                let binders: Vec<(Name, Type)> = payload.iter().map(|t| (self.fresh("v"), t.clone())).collect();
                let mut inner = scope.to_vec();
                inner.extend(binders.iter().cloned());
                let body = self.process(depth - 1, &inner);
                SurfaceProcess::input(subject, binders, body)
            }
            Capability::Output => {
                let reverse = self.settings.allow_reverse
                    && payload.iter().all(|t| !t.is_dyn())
                    && self.chance(0.25);
                let mut pending = Vec::new();
                let mut args = Vec::new();
                for t in &payload {
                    let wanted = if reverse { reverse_type(t) } else { t.clone() };
                    let candidates = Self::having(scope, &wanted);
                    if noisy && self.chance(0.5) {
                        let (n, _) = scope.choose(&mut self.rng).cloned().expect("non-empty scope");
                        args.push(n);
                    } else if let Some(n) = candidates.choose(&mut self.rng).filter(|_| self.rng.gen_bool(0.7)) {
                        args.push(n.clone());
                    } else {
                        let n = self.fresh("x");
                        pending.push((n.clone(), wanted));
                        args.push(n);
                    }
                }
                let mut inner = scope.to_vec();
                inner.extend(pending.iter().cloned());
                let body = self.process(depth - 1, &inner);
                let mut p = if reverse {
                    SurfaceProcess::reverse_output(subject, args, body)
                } else {
                    SurfaceProcess::output(subject, args, body)
                };
                for (n, t) in pending.into_iter().rev() {
                    p = SurfaceProcess::restrict(n, t, p);
                }
                p
            }
        }
    }
}

/// Apply `f` to every type annotation: environment entries, input binders
/// and restrictions.
pub fn for_each_annotation(env: &mut TypeEnv, p: &mut SurfaceProcess, f: &mut impl FnMut(&mut Type)) {
    for (_, t) in env.iter_mut() {
        f(t);
    }
    annotations_in(p, f);
}

fn annotations_in(p: &mut SurfaceProcess, f: &mut impl FnMut(&mut Type)) {
    match p {
        SurfaceProcess::Nil => {}
        SurfaceProcess::Input { binders, body, .. } => {
            for (_, t) in binders.iter_mut() {
                f(t);
            }
            annotations_in(body, f);
        }
        SurfaceProcess::Output { body, .. } | SurfaceProcess::ReverseOutput { body, .. } => annotations_in(body, f),
        SurfaceProcess::Par(l, r) | SurfaceProcess::Choice(l, r) => {
            annotations_in(l, f);
            annotations_in(r, f);
        }
        SurfaceProcess::Restrict { ty, body, .. } => {
            f(ty);
            annotations_in(body, f);
        }
        SurfaceProcess::Replicate(body) => annotations_in(body, f),
    }
}

/// Number of type nodes in `t`.
pub fn type_nodes(t: &Type) -> usize {
    match t {
        Type::Dyn => 1,
        Type::Chan(_, args) => 1 + args.iter().map(type_nodes).sum::<usize>(),
    }
}

/// Replace the `k`-th type node (pre-order) by `dyn`.
pub fn erase_node(t: &Type, k: usize) -> Type {
    fn go(t: &Type, k: &mut usize) -> Type {
        if *k == 0 {
            *k = usize::MAX;
            return Type::Dyn;
        }
        *k = k.wrapping_sub(1);
        match t {
            Type::Dyn => Type::Dyn,
            Type::Chan(cap, args) => Type::Chan(*cap, args.iter().map(|a| go(a, k)).collect()),
        }
    }
    let mut k = k;
    go(t, &mut k)
}

/// Every program obtained by turning one type node of one annotation into
/// `dyn`.
pub fn single_erasures(env: &TypeEnv, p: &SurfaceProcess) -> Vec<(TypeEnv, SurfaceProcess)> {
    let mut sizes = Vec::new();
    let (mut env0, mut p0) = (env.clone(), p.clone());
    for_each_annotation(&mut env0, &mut p0, &mut |t| sizes.push(type_nodes(t)));
    let mut out = Vec::new();
    for (slot, size) in sizes.into_iter().enumerate() {
        for node in 0..size {
            let (mut env1, mut p1) = (env.clone(), p.clone());
            let mut seen = 0;
            for_each_annotation(&mut env1, &mut p1, &mut |t| {
                if seen == slot {
                    *t = erase_node(t, node);
                }
                seen += 1;
            });
            out.push((env1, p1));
        }
    }
    out
}

pub fn mentions_dyn(env: &TypeEnv, p: &SurfaceProcess) -> bool {
    let mut found = false;
    let (mut env, mut p) = (env.clone(), p.clone());
    for_each_annotation(&mut env, &mut p, &mut |t| found |= t.mentions_dyn());
    found
}
