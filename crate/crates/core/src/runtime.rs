//! Execution of cast-calculus processes.
//!
//! A [`Configuration`] is the canonical form of a process under structural
//! congruence: top-level restrictions hoisted out (renamed apart when they
//! clash), and the remaining parallel components kept as a list of
//! sequential threads. Steps are chosen from [`enumerate_redexes`] by one of
//! three schedulers (seeded random, exhaustive, interactive).
//!
//! Communication over channels whose subjects carry casts goes through
//! c-solve: the output's subject casts are resolved first, then the input's,
//! as one atomic step committed to that pair of threads. Cast frames popped
//! from a subject are pushed onto the arguments of the output.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::syntax::{
    ch, de_bruijn, rename, substitute, Capability, Cast, CastChannel, CastProcess, FreeNames, Name,
    Substitution, Type,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StepRule {
    Comm,
    CSolve,
    COutSucceed,
    COutFail,
    COutExpand,
    CInSucceed,
    CInFail,
    CInExpand,
    Choice,
    Replicate,
}

impl StepRule {
    pub fn name(self) -> &'static str {
        match self {
            StepRule::Comm => "comm",
            StepRule::CSolve => "c-solve",
            StepRule::COutSucceed => "c-out-succeed",
            StepRule::COutFail => "c-out-fail",
            StepRule::COutExpand => "c-out-expand",
            StepRule::CInSucceed => "c-in-succeed",
            StepRule::CInFail => "c-in-fail",
            StepRule::CInExpand => "c-in-expand",
            StepRule::Choice => "choice",
            StepRule::Replicate => "replicate",
        }
    }

    /// Rules of the cast-resolution relation.
    pub fn is_cast_rule(self) -> bool {
        !matches!(self, StepRule::Comm | StepRule::Choice | StepRule::Replicate)
    }
}

impl fmt::Display for StepRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TraceEvent {
    pub index: usize,
    pub rule: StepRule,
    pub before: String,
    pub after: String,
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{} [{}] {} --> {}", self.index, self.rule, self.before, self.after)
    }
}

/// The cast that failed, as the subject looked when the fail rule fired.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CastFailure {
    pub rule: StepRule,
    pub channel: CastChannel,
}

impl fmt::Display for CastFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.channel)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Halted {
    TypeError(CastFailure),
    /// A `typeError` term appeared in the program itself.
    LiteralTypeError,
}

impl fmt::Display for Halted {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Halted::TypeError(failure) => write!(f, "type-error({failure})"),
            Halted::LiteralTypeError => f.write_str("type-error(typeError)"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum RuntimeError {
    #[error("malformed cast on `{channel}`: {reason}")]
    MalformedCast { channel: String, reason: String },
    #[error("communication arity mismatch on `{channel}`: {binders} binders, {args} arguments")]
    ArityMismatch {
        channel: Name,
        binders: usize,
        args: usize,
    },
    #[error("redex {0} is not enabled in this configuration")]
    InvalidRedex(String),
    #[error("configuration has halted")]
    Halted,
}

/// Canonical form of a running process.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Configuration {
    pub restrictions: Vec<(Name, Type)>,
    /// Each thread is headed by an input, output, choice or replication.
    pub threads: Vec<CastProcess>,
    pub halted: Option<Halted>,
    /// Free names of the original program; restricted names avoid them.
    reserved: BTreeSet<Name>,
}

impl Configuration {
    fn avoid_set(&self) -> BTreeSet<Name> {
        let mut avoid = self.reserved.clone();
        avoid.extend(self.restrictions.iter().map(|(n, _)| n.clone()));
        avoid
    }

    /// Flatten `p` into threads, hoisting restrictions into `self`.
    fn flatten(&mut self, p: CastProcess, out: &mut Vec<CastProcess>) {
        match p {
            CastProcess::Nil => {}
            CastProcess::Par(l, r) => {
                self.flatten(*l, out);
                self.flatten(*r, out);
            }
            CastProcess::Restrict { name, ty, body } => {
                let avoid = self.avoid_set();
                let fresh = if avoid.contains(&name) {
                    name.freshen(name.index + 1, &avoid)
                } else {
                    name.clone()
                };
                let body = if fresh == name {
                    *body
                } else {
                    rename(&body, &[(name, fresh.clone())].into_iter().collect())
                };
                self.restrictions.push((fresh, ty));
                self.flatten(body, out);
            }
            CastProcess::TypeError => {
                if self.halted.is_none() {
                    self.halted = Some(Halted::LiteralTypeError);
                }
            }
            thread => out.push(thread),
        }
    }

    /// Replace the threads at `positions` with the flattened replacements.
    fn splice(&mut self, mut replacements: Vec<(usize, CastProcess)>) {
        replacements.sort_by_key(|(i, _)| *i);
        let old = std::mem::take(&mut self.threads);
        let mut new_threads = Vec::with_capacity(old.len() + 2);
        let mut reps = replacements.into_iter().peekable();
        for (k, thread) in old.into_iter().enumerate() {
            if reps.peek().map(|(i, _)| *i) == Some(k) {
                let (_, rep) = reps.next().expect("peeked");
                let mut flat = Vec::new();
                self.flatten(rep, &mut flat);
                new_threads.extend(flat);
            } else {
                new_threads.push(thread);
            }
        }
        self.threads = new_threads;
    }

    /// True if some input and output subject share a channel name.
    pub fn has_communicating_pair(&self) -> bool {
        let mut ins = BTreeSet::new();
        let mut outs = BTreeSet::new();
        for t in &self.threads {
            match t {
                CastProcess::Input { subject, .. } => {
                    ins.insert(ch(subject).clone());
                }
                CastProcess::Output { subject, .. } => {
                    outs.insert(ch(subject).clone());
                }
                _ => {}
            }
        }
        ins.intersection(&outs).next().is_some()
    }

    /// Key identifying the configuration up to alpha-renaming of
    /// restricted and bound names and reordering of threads.
    pub fn canonical_key(&self) -> String {
        let live: BTreeSet<Name> = self
            .threads
            .iter()
            .flat_map(|t| t.free_names())
            .filter(|n| self.restrictions.iter().any(|(r, _)| r == n))
            .collect();
        let placeholder = Name::new("%");
        let mask: BTreeMap<Name, Name> = live.iter().map(|n| (n.clone(), placeholder.clone())).collect();
        let mut masked: Vec<(String, &CastProcess)> = self
            .threads
            .iter()
            .map(|t| (de_bruijn(&rename(t, &mask), &[]), t))
            .collect();
        masked.sort_by(|a, b| a.0.cmp(&b.0));
        let mut order: Vec<Name> = Vec::new();
        for (_, t) in &masked {
            for c in t.channels() {
                if live.contains(&c.base) && !order.contains(&c.base) {
                    order.push(c.base.clone());
                }
            }
        }
        for n in &live {
            if !order.contains(n) {
                order.push(n.clone());
            }
        }
        // de_bruijn treats later entries as inner binders; reverse so the
        // first-seen name gets the largest index consistently.
        let mut key = String::new();
        for n in &order {
            let ty = self
                .restrictions
                .iter()
                .rev()
                .find(|(r, _)| r == n)
                .map(|(_, t)| t.to_string())
                .unwrap_or_default();
            key.push_str("new{");
            key.push_str(&ty);
            key.push('}');
        }
        let mut rendered: Vec<String> = masked.iter().map(|(_, t)| de_bruijn(t, &order)).collect();
        rendered.sort();
        key.push('[');
        key.push_str(&rendered.join("|"));
        key.push(']');
        if let Some(h) = &self.halted {
            key.push_str(&format!("halt:{h}"));
        }
        key
    }

    fn threads_text(threads: &[&CastProcess]) -> String {
        if threads.is_empty() {
            return "0".into();
        }
        threads
            .iter()
            .map(|t| thread_text(t))
            .collect::<Vec<_>>()
            .join(" | ")
    }
}

fn thread_text(t: &CastProcess) -> String {
    match t {
        CastProcess::Par(..) | CastProcess::Choice(..) => format!("({t})"),
        _ => t.to_string(),
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (n, t) in &self.restrictions {
            write!(f, "new ({n}:{t}) ")?;
        }
        let threads: Vec<&CastProcess> = self.threads.iter().collect();
        write!(f, "[ {} ]", Configuration::threads_text(&threads))?;
        if let Some(h) = &self.halted {
            write!(f, " {h}")?;
        }
        Ok(())
    }
}

/// Bring a process into canonical configuration form.
pub fn normalize(p: &CastProcess) -> Configuration {
    let mut cfg = Configuration {
        restrictions: Vec::new(),
        threads: Vec::new(),
        halted: None,
        reserved: p.free_names(),
    };
    let mut threads = Vec::new();
    cfg.flatten(p.clone(), &mut threads);
    cfg.threads = threads;
    cfg
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RedexKind {
    Comm,
    CSolve,
    ChoiceLeft,
    ChoiceRight,
    ReplicateUnfold,
}

impl fmt::Display for RedexKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RedexKind::Comm => "comm",
            RedexKind::CSolve => "c-solve",
            RedexKind::ChoiceLeft => "choice-left",
            RedexKind::ChoiceRight => "choice-right",
            RedexKind::ReplicateUnfold => "replicate",
        })
    }
}

/// For `Comm`/`CSolve`, `participants` is `[input, output]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Redex {
    pub kind: RedexKind,
    pub participants: Vec<usize>,
    pub channel: Option<Name>,
}

impl fmt::Display for Redex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.kind)?;
        if let Some(c) = &self.channel {
            write!(f, " on {c}")?;
        }
        let ps: Vec<String> = self.participants.iter().map(|p| format!("#{p}")).collect();
        write!(f, " [{}]", ps.join(", "))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Polarity {
    In,
    Out,
}

/// Prefixes a thread can fire once its choices are resolved or its
/// replication unfolded. Names restricted inside the thread are marked
/// private.
fn heads(p: &CastProcess, private: &mut Vec<Name>, out: &mut Vec<(Name, Polarity, bool)>) {
    match p {
        CastProcess::Input { subject, .. } => {
            let n = ch(subject).clone();
            let is_private = private.contains(&n);
            out.push((n, Polarity::In, is_private));
        }
        CastProcess::Output { subject, .. } => {
            let n = ch(subject).clone();
            let is_private = private.contains(&n);
            out.push((n, Polarity::Out, is_private));
        }
        CastProcess::Par(l, r) | CastProcess::Choice(l, r) => {
            heads(l, private, out);
            heads(r, private, out);
        }
        CastProcess::Restrict { name, body, .. } => {
            private.push(name.clone());
            heads(body, private, out);
            private.pop();
        }
        CastProcess::Replicate(body) => heads(body, private, out),
        CastProcess::Nil | CastProcess::TypeError => {}
    }
}

fn replicate_can_participate(cfg: &Configuration, at: usize) -> bool {
    let CastProcess::Replicate(body) = &cfg.threads[at] else {
        return false;
    };
    let mut mine = Vec::new();
    heads(body, &mut Vec::new(), &mut mine);
    let mut others = Vec::new();
    for (k, t) in cfg.threads.iter().enumerate() {
        if k != at {
            heads(t, &mut Vec::new(), &mut others);
        }
    }
    // Another copy of the same body is also a potential partner.
    others.extend(mine.iter().filter(|(_, _, private)| !private).cloned());
    let useful = mine.iter().any(|(n, pol, private)| {
        let partners = if *private { &mine } else { &others };
        partners
            .iter()
            .any(|(m, q, p2)| m == n && q != pol && p2 == private)
    });
    useful && !idle_copy_present(cfg, at, body)
}

/// True when every thread a fresh copy of `body` would add is already
/// running (up to restricted names). Unfolding again would only pile up
/// interchangeable idle copies.
fn idle_copy_present(cfg: &Configuration, at: usize, body: &CastProcess) -> bool {
    let mut scratch = cfg.clone();
    let mut copy = Vec::new();
    scratch.flatten(body.clone(), &mut copy);
    let placeholder = Name::new("%");
    let mask: BTreeMap<Name, Name> = scratch
        .restrictions
        .iter()
        .map(|(n, _)| (n.clone(), placeholder.clone()))
        .collect();
    let render = |t: &CastProcess| de_bruijn(&rename(t, &mask), &[]);
    let mut existing: Vec<String> = cfg
        .threads
        .iter()
        .enumerate()
        .filter(|(k, _)| *k != at)
        .map(|(_, t)| render(t))
        .collect();
    copy.iter().all(|t| {
        let r = render(t);
        match existing.iter().position(|e| *e == r) {
            Some(k) => {
                existing.swap_remove(k);
                true
            }
            None => false,
        }
    })
}

/// Every enabled reduction, ordered by thread index.
pub fn enumerate_redexes(cfg: &Configuration) -> Vec<Redex> {
    let mut out = Vec::new();
    if cfg.halted.is_some() {
        return out;
    }
    for (i, t) in cfg.threads.iter().enumerate() {
        match t {
            CastProcess::Choice(..) => {
                for kind in [RedexKind::ChoiceLeft, RedexKind::ChoiceRight] {
                    out.push(Redex {
                        kind,
                        participants: vec![i],
                        channel: None,
                    });
                }
            }
            CastProcess::Replicate(_) => {
                if replicate_can_participate(cfg, i) {
                    out.push(Redex {
                        kind: RedexKind::ReplicateUnfold,
                        participants: vec![i],
                        channel: None,
                    });
                }
            }
            CastProcess::Input { subject: ins, .. } => {
                for (j, u) in cfg.threads.iter().enumerate() {
                    if let CastProcess::Output { subject: outs, .. } = u {
                        if ch(ins) == ch(outs) {
                            let kind = if ins.is_bare() && outs.is_bare() {
                                RedexKind::Comm
                            } else {
                                RedexKind::CSolve
                            };
                            out.push(Redex {
                                kind,
                                participants: vec![i, j],
                                channel: Some(ch(ins).clone()),
                            });
                        }
                    }
                }
            }
            _ => {}
        }
    }
    out
}

/// Output-headed term split into parts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OutputTerm {
    pub subject: CastChannel,
    pub args: Vec<CastChannel>,
    pub body: CastProcess,
}

impl OutputTerm {
    pub fn from_process(p: &CastProcess) -> Option<OutputTerm> {
        match p {
            CastProcess::Output {
                subject,
                args,
                body,
            } => Some(OutputTerm {
                subject: subject.clone(),
                args: args.clone(),
                body: (**body).clone(),
            }),
            _ => None,
        }
    }

    pub fn to_process(&self) -> CastProcess {
        CastProcess::Output {
            subject: self.subject.clone(),
            args: self.args.clone(),
            body: Box::new(self.body.clone()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InputTerm {
    pub subject: CastChannel,
    pub binders: Vec<(Name, Type)>,
    pub body: CastProcess,
}

impl InputTerm {
    pub fn from_process(p: &CastProcess) -> Option<InputTerm> {
        match p {
            CastProcess::Input {
                subject,
                binders,
                body,
            } => Some(InputTerm {
                subject: subject.clone(),
                binders: binders.clone(),
                body: (**body).clone(),
            }),
            _ => None,
        }
    }

    pub fn to_process(&self) -> CastProcess {
        CastProcess::Input {
            subject: self.subject.clone(),
            binders: self.binders.clone(),
            body: Box::new(self.body.clone()),
        }
    }
}

/// Result of cast resolution: the resolved term, or the failure.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Resolution<T> {
    Resolved(T),
    Failed(CastFailure),
}

/// One application of a cast-resolution rule.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CastStep {
    pub rule: StepRule,
    pub before: String,
    pub after: String,
}

fn malformed(c: &CastChannel, reason: impl Into<String>) -> RuntimeError {
    RuntimeError::MalformedCast {
        channel: c.to_string(),
        reason: reason.into(),
    }
}

fn push_frame(c: &mut CastChannel, cast: Cast) {
    if !cast.is_trivial() {
        c.push(cast);
    }
}

/// Rewrite an outermost `dyn ⇒ I·(S̄)` frame to `I·(dyn, …) ⇒ I·(S̄)`. The
/// frame beneath, if it targeted `dyn`, is retargeted to the same expanded
/// type so the stack stays adjacent.
fn expand(subject: &mut CastChannel, cap: Capability, arity: usize) {
    let expanded = Type::Chan(cap, vec![Type::Dyn; arity]);
    let depth = subject.casts.len();
    subject.casts[depth - 1].source = expanded.clone();
    if depth >= 2 && subject.casts[depth - 2].target.is_dyn() {
        subject.casts[depth - 2].target = expanded;
    }
}

/// Resolve the subject casts of an output until its subject is bare.
pub fn resolve_output_casts(
    out: &OutputTerm,
) -> Result<(Resolution<OutputTerm>, Vec<CastStep>), RuntimeError> {
    let mut term = out.clone();
    let mut steps = Vec::new();
    loop {
        let Some(frame) = term.subject.outermost().cloned() else {
            return Ok((Resolution::Resolved(term), steps));
        };
        let before = term.to_process().to_string();
        let Type::Chan(Capability::Output, targets) = &frame.target else {
            return Err(malformed(&term.subject, "output subject cast does not target an output type"));
        };
        if targets.len() != term.args.len() {
            return Err(malformed(&term.subject, "cast arity differs from the number of arguments"));
        }
        match &frame.source {
            Type::Chan(Capability::Output, sources) if sources.len() == targets.len() => {
                term.subject.casts.pop();
                for (arg, (s, t)) in term.args.iter_mut().zip(targets.iter().zip(sources)) {
                    push_frame(arg, Cast::new(s.clone(), t.clone()));
                }
                steps.push(CastStep {
                    rule: StepRule::COutSucceed,
                    before,
                    after: term.to_process().to_string(),
                });
            }
            Type::Chan(..) => {
                steps.push(CastStep {
                    rule: StepRule::COutFail,
                    before,
                    after: CastProcess::TypeError.to_string(),
                });
                let failure = CastFailure {
                    rule: StepRule::COutFail,
                    channel: term.subject.clone(),
                };
                return Ok((Resolution::Failed(failure), steps));
            }
            Type::Dyn => {
                expand(&mut term.subject, Capability::Output, targets.len());
                steps.push(CastStep {
                    rule: StepRule::COutExpand,
                    before,
                    after: term.to_process().to_string(),
                });
            }
        }
    }
}

fn pair_text(input: &InputTerm, output: &OutputTerm) -> String {
    format!("{} | {}", input.to_process(), output.to_process())
}

/// Result of resolving an input's casts: the updated pair, or the failure.
pub type InputResolution = (Resolution<(InputTerm, OutputTerm)>, Vec<CastStep>);

/// Resolve the subject casts of an input against a bare-subject output.
/// Popped frames retype the binders and push casts onto the output's args.
pub fn resolve_input_casts(input: &InputTerm, output: &OutputTerm) -> Result<InputResolution, RuntimeError> {
    let mut inp = input.clone();
    let mut out = output.clone();
    let mut steps = Vec::new();
    loop {
        let Some(frame) = inp.subject.outermost().cloned() else {
            return Ok((Resolution::Resolved((inp, out)), steps));
        };
        let before = pair_text(&inp, &out);
        let Type::Chan(Capability::Input, targets) = &frame.target else {
            return Err(malformed(&inp.subject, "input subject cast does not target an input type"));
        };
        if targets.len() != inp.binders.len() || targets.len() != out.args.len() {
            return Err(malformed(&inp.subject, "cast arity differs from the number of binders or arguments"));
        }
        match &frame.source {
            Type::Chan(Capability::Input, sources) if sources.len() == targets.len() => {
                inp.subject.casts.pop();
                for ((_, ann), t) in inp.binders.iter_mut().zip(sources) {
                    *ann = t.clone();
                }
                for (arg, (s, t)) in out.args.iter_mut().zip(targets.iter().zip(sources)) {
                    push_frame(arg, Cast::new(s.clone(), t.clone()));
                }
                steps.push(CastStep {
                    rule: StepRule::CInSucceed,
                    before,
                    after: pair_text(&inp, &out),
                });
            }
            Type::Chan(..) => {
                steps.push(CastStep {
                    rule: StepRule::CInFail,
                    before,
                    after: CastProcess::TypeError.to_string(),
                });
                let failure = CastFailure {
                    rule: StepRule::CInFail,
                    channel: inp.subject.clone(),
                };
                return Ok((Resolution::Failed(failure), steps));
            }
            Type::Dyn => {
                expand(&mut inp.subject, Capability::Input, targets.len());
                steps.push(CastStep {
                    rule: StepRule::CInExpand,
                    before,
                    after: pair_text(&inp, &out),
                });
            }
        }
    }
}

fn event(rule: StepRule, before: String, after: String) -> TraceEvent {
    TraceEvent {
        index: 0,
        rule,
        before,
        after,
    }
}

/// Apply `comm` to a bare-subject pair: substitute the arguments for the
/// binders. Returns the two continuations.
fn communicate(input: &InputTerm, output: &OutputTerm) -> Result<(CastProcess, CastProcess), RuntimeError> {
    if input.binders.len() != output.args.len() {
        return Err(RuntimeError::ArityMismatch {
            channel: ch(&input.subject).clone(),
            binders: input.binders.len(),
            args: output.args.len(),
        });
    }
    let mapping: Substitution = input
        .binders
        .iter()
        .map(|(n, _)| n.clone())
        .zip(output.args.iter().cloned())
        .collect();
    Ok((substitute(&input.body, &mapping), output.body.clone()))
}

fn pair_after(i: usize, j: usize, left: &CastProcess, right: &CastProcess) -> String {
    let mut parts: Vec<(usize, &CastProcess)> = vec![(i, left), (j, right)];
    parts.sort_by_key(|(k, _)| *k);
    let live: Vec<&CastProcess> = parts
        .into_iter()
        .map(|(_, p)| p)
        .filter(|p| **p != CastProcess::Nil)
        .collect();
    Configuration::threads_text(&live)
}

/// Perform one enabled redex. Events are numbered from 0; runners renumber.
pub fn step(cfg: &Configuration, redex: &Redex) -> Result<(Configuration, Vec<TraceEvent>), RuntimeError> {
    if cfg.halted.is_some() {
        return Err(RuntimeError::Halted);
    }
    if !enumerate_redexes(cfg).contains(redex) {
        return Err(RuntimeError::InvalidRedex(redex.to_string()));
    }
    let mut next = cfg.clone();
    let mut events = Vec::new();
    match redex.kind {
        RedexKind::ChoiceLeft | RedexKind::ChoiceRight => {
            let i = redex.participants[0];
            let CastProcess::Choice(l, r) = &cfg.threads[i] else {
                unreachable!("validated redex");
            };
            let chosen = if redex.kind == RedexKind::ChoiceLeft { l } else { r };
            events.push(event(
                StepRule::Choice,
                thread_text(&cfg.threads[i]),
                thread_text(chosen),
            ));
            next.splice(vec![(i, (**chosen).clone())]);
        }
        RedexKind::ReplicateUnfold => {
            let i = redex.participants[0];
            let CastProcess::Replicate(body) = &cfg.threads[i] else {
                unreachable!("validated redex");
            };
            let unfolded = CastProcess::par(cfg.threads[i].clone(), (**body).clone());
            events.push(event(
                StepRule::Replicate,
                thread_text(&cfg.threads[i]),
                unfolded.to_string(),
            ));
            next.splice(vec![(i, unfolded)]);
        }
        RedexKind::Comm | RedexKind::CSolve => {
            let (i, j) = (redex.participants[0], redex.participants[1]);
            let input = InputTerm::from_process(&cfg.threads[i]).expect("validated redex");
            let output = OutputTerm::from_process(&cfg.threads[j]).expect("validated redex");
            let before = pair_after(i, j, &cfg.threads[i], &cfg.threads[j]);
            let (input, output) = if redex.kind == RedexKind::CSolve {
                let (resolved_out, out_steps) = resolve_output_casts(&output)?;
                let mut sub: Vec<CastStep> = out_steps;
                let resolved = match resolved_out {
                    Resolution::Failed(failure) => Resolution::Failed(failure),
                    Resolution::Resolved(out) => {
                        let (res, in_steps) = resolve_input_casts(&input, &out)?;
                        sub.extend(in_steps);
                        res
                    }
                };
                match resolved {
                    Resolution::Failed(failure) => {
                        events.push(event(StepRule::CSolve, before, "typeError".into()));
                        events.extend(sub.into_iter().map(|s| event(s.rule, s.before, s.after)));
                        next.splice(vec![(i, CastProcess::Nil), (j, CastProcess::Nil)]);
                        next.halted = Some(Halted::TypeError(failure));
                        return Ok((next, number(events)));
                    }
                    Resolution::Resolved((inp, out)) => {
                        let after = pair_after(i, j, &inp.to_process(), &out.to_process());
                        events.push(event(StepRule::CSolve, before.clone(), after));
                        events.extend(sub.into_iter().map(|s| event(s.rule, s.before, s.after)));
                        (inp, out)
                    }
                }
            } else {
                (input, output)
            };
            let comm_before = pair_after(i, j, &input.to_process(), &output.to_process());
            let (cont_in, cont_out) = communicate(&input, &output)?;
            events.push(event(
                StepRule::Comm,
                comm_before,
                pair_after(i, j, &cont_in, &cont_out),
            ));
            next.splice(vec![(i, cont_in), (j, cont_out)]);
        }
    }
    Ok((next, number(events)))
}

fn number(mut events: Vec<TraceEvent>) -> Vec<TraceEvent> {
    for (k, e) in events.iter_mut().enumerate() {
        e.index = k;
    }
    events
}

/// Terminal status of a run.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Status {
    NormalStuck,
    TypeError(Halted),
    MaxSteps,
    DepthExceeded,
    Aborted,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StatusKind {
    NormalStuck,
    TypeError,
    MaxSteps,
    DepthExceeded,
    Aborted,
}

impl Status {
    pub fn kind(&self) -> StatusKind {
        match self {
            Status::NormalStuck => StatusKind::NormalStuck,
            Status::TypeError(_) => StatusKind::TypeError,
            Status::MaxSteps => StatusKind::MaxSteps,
            Status::DepthExceeded => StatusKind::DepthExceeded,
            Status::Aborted => StatusKind::Aborted,
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Status::NormalStuck => f.write_str("normal-stuck"),
            Status::TypeError(h) => write!(f, "{h}"),
            Status::MaxSteps => f.write_str("max-steps"),
            Status::DepthExceeded => f.write_str("depth-exceeded"),
            Status::Aborted => f.write_str("aborted"),
        }
    }
}

impl fmt::Display for StatusKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StatusKind::NormalStuck => "normal-stuck",
            StatusKind::TypeError => "type-error",
            StatusKind::MaxSteps => "max-steps",
            StatusKind::DepthExceeded => "depth-exceeded",
            StatusKind::Aborted => "aborted",
        })
    }
}

/// A finished run: terminal status, the configuration it stopped in, and
/// the trace that led there.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub status: Status,
    pub trace: Vec<TraceEvent>,
    pub steps: usize,
    pub last: Configuration,
}

impl Outcome {
    pub fn halt_line(&self) -> String {
        format!("HALT: {}", self.status)
    }

    /// Trace lines followed by the HALT line.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for e in &self.trace {
            out.push_str(&e.to_string());
            out.push('\n');
        }
        out.push_str(&self.halt_line());
        out.push('\n');
        out
    }
}

#[derive(Clone, Debug)]
pub struct RunReport {
    /// One outcome for seeded and interactive runs; for exhaustive runs one
    /// witness per distinct terminal status, in status order.
    pub outcomes: Vec<Outcome>,
    /// Distinct configurations visited (exhaustive mode; otherwise steps + 1).
    pub states_explored: usize,
}

impl RunReport {
    pub fn statuses(&self) -> BTreeSet<StatusKind> {
        self.outcomes.iter().map(|o| o.status.kind()).collect()
    }
}

/// Picks a redex index, or `None` to abort the run.
pub type Chooser<'a> = dyn FnMut(&Configuration, &[Redex]) -> Option<usize> + 'a;

pub enum Scheduler<'a> {
    Seeded { seed: u64, max_steps: usize },
    Exhaustive { depth: usize },
    /// The chooser is consulted only when more than one redex is enabled.
    Interactive {
        chooser: &'a mut Chooser<'a>,
        max_steps: usize,
    },
}

fn append(trace: &mut Vec<TraceEvent>, events: Vec<TraceEvent>) {
    for mut e in events {
        e.index = trace.len() + 1;
        trace.push(e);
    }
}

fn drive(
    cfg: &Configuration,
    max_steps: usize,
    mut pick: impl FnMut(&Configuration, &[Redex]) -> Option<usize>,
) -> Result<Outcome, RuntimeError> {
    let mut current = cfg.clone();
    let mut trace = Vec::new();
    let mut steps = 0;
    let status = loop {
        if let Some(h) = &current.halted {
            break Status::TypeError(h.clone());
        }
        let redexes = enumerate_redexes(&current);
        if redexes.is_empty() {
            break Status::NormalStuck;
        }
        if steps >= max_steps {
            break Status::MaxSteps;
        }
        let Some(k) = pick(&current, &redexes) else {
            break Status::Aborted;
        };
        let redex = redexes
            .get(k)
            .ok_or_else(|| RuntimeError::InvalidRedex(format!("choice {k}")))?;
        let (next, events) = step(&current, redex)?;
        append(&mut trace, events);
        current = next;
        steps += 1;
    };
    Ok(Outcome {
        status,
        trace,
        steps,
        last: current,
    })
}

/// Uniformly random redex choice from a seeded ChaCha8 generator.
pub fn run_seeded(cfg: &Configuration, seed: u64, max_steps: usize) -> Result<Outcome, RuntimeError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    drive(cfg, max_steps, |_, redexes| Some(rng.gen_range(0..redexes.len())))
}

pub fn run_interactive(
    cfg: &Configuration,
    max_steps: usize,
    chooser: &mut Chooser<'_>,
) -> Result<Outcome, RuntimeError> {
    drive(cfg, max_steps, |c, redexes| {
        if redexes.len() == 1 {
            Some(0)
        } else {
            chooser(c, redexes)
        }
    })
}

/// One configuration reached during exhaustive exploration.
#[derive(Clone, Debug)]
pub struct ExploredState {
    pub config: Configuration,
    pub depth: usize,
    pub redexes: Vec<Redex>,
    parent: Option<(usize, Vec<TraceEvent>)>,
}

#[derive(Clone, Debug)]
pub struct Exploration {
    pub states: Vec<ExploredState>,
    pub terminals: BTreeMap<StatusKind, Outcome>,
    /// Successor edges of every expanded state, including edges into
    /// states that were already known.
    edges: Vec<Vec<(usize, Vec<TraceEvent>)>>,
}

impl Exploration {
    fn witness(&self, mut at: usize) -> Vec<TraceEvent> {
        let mut chunks = Vec::new();
        while let Some((parent, events)) = &self.states[at].parent {
            chunks.push(events.clone());
            at = *parent;
        }
        let mut trace = Vec::new();
        for chunk in chunks.into_iter().rev() {
            append(&mut trace, chunk);
        }
        trace
    }

    /// A cycle reachable from the start, as a list of edges `(from, to)`
    /// beginning and ending at the same state.
    fn find_cycle(&self) -> Option<Vec<(usize, usize)>> {
        // 0 unvisited, 1 on the stack, 2 done.
        let mut color = vec![0u8; self.states.len()];
        let mut stack: Vec<(usize, usize)> = vec![(0, 0)];
        color[0] = 1;
        while let Some(&mut (at, ref mut next)) = stack.last_mut() {
            let Some((to, _)) = self.edges[at].get(*next) else {
                color[at] = 2;
                stack.pop();
                continue;
            };
            *next += 1;
            let to = *to;
            match color[to] {
                0 => {
                    color[to] = 1;
                    stack.push((to, 0));
                }
                1 => {
                    let start = stack.iter().position(|&(s, _)| s == to).expect("on stack");
                    let mut cycle: Vec<(usize, usize)> =
                        stack[start..].windows(2).map(|w| (w[0].0, w[1].0)).collect();
                    cycle.push((at, to));
                    return Some(cycle);
                }
                _ => {}
            }
        }
        None
    }

    fn edge_events(&self, from: usize, to: usize) -> Vec<TraceEvent> {
        self.edges[from]
            .iter()
            .find(|(t, _)| *t == to)
            .map(|(_, events)| events.clone())
            .expect("edge exists")
    }

    /// A run of exactly `depth` steps that goes around `cycle` as often as
    /// needed.
    fn cycle_witness(&self, cycle: &[(usize, usize)], depth: usize) -> Outcome {
        let entry = cycle[0].0;
        let mut trace = self.witness(entry);
        let mut steps = self.states[entry].depth;
        let mut at = entry;
        for &(from, to) in cycle.iter().cycle() {
            if steps >= depth {
                break;
            }
            append(&mut trace, self.edge_events(from, to));
            steps += 1;
            at = to;
        }
        Outcome {
            status: Status::DepthExceeded,
            steps,
            trace,
            last: self.states[at].config.clone(),
        }
    }
}

/// Breadth-first exploration of every redex choice up to `depth` steps,
/// merging alpha-equivalent configurations.
pub fn explore(cfg: &Configuration, depth: usize) -> Result<Exploration, RuntimeError> {
    let mut exploration = Exploration {
        states: Vec::new(),
        terminals: BTreeMap::new(),
        edges: Vec::new(),
    };
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut queue = VecDeque::new();
    seen.insert(cfg.canonical_key(), 0);
    exploration.states.push(ExploredState {
        config: cfg.clone(),
        depth: 0,
        redexes: enumerate_redexes(cfg),
        parent: None,
    });
    exploration.edges.push(Vec::new());
    queue.push_back(0);
    while let Some(at) = queue.pop_front() {
        let state = exploration.states[at].clone();
        let status = match &state.config.halted {
            Some(h) => Some(Status::TypeError(h.clone())),
            None if state.redexes.is_empty() => Some(Status::NormalStuck),
            None if state.depth >= depth => Some(Status::DepthExceeded),
            None => None,
        };
        if let Some(status) = status {
            let kind = status.kind();
            if !exploration.terminals.contains_key(&kind) {
                let trace = exploration.witness(at);
                exploration.terminals.insert(
                    kind,
                    Outcome {
                        status,
                        steps: state.depth,
                        trace,
                        last: state.config.clone(),
                    },
                );
            }
            continue;
        }
        for redex in &state.redexes {
            let (next, events) = step(&state.config, redex)?;
            let key = next.canonical_key();
            if let Some(&known) = seen.get(&key) {
                exploration.edges[at].push((known, events));
                continue;
            }
            let idx = exploration.states.len();
            seen.insert(key, idx);
            exploration.edges.push(Vec::new());
            exploration.edges[at].push((idx, events.clone()));
            let redexes = enumerate_redexes(&next);
            exploration.states.push(ExploredState {
                config: next,
                depth: state.depth + 1,
                redexes,
                parent: Some((at, events)),
            });
            queue.push_back(idx);
        }
    }
    // Merging states folds a non-terminating run into a cycle; such a run
    // still outlasts any bound.
    if !exploration.terminals.contains_key(&StatusKind::DepthExceeded) {
        if let Some(cycle) = exploration.find_cycle() {
            let outcome = exploration.cycle_witness(&cycle, depth);
            exploration.terminals.insert(StatusKind::DepthExceeded, outcome);
        }
    }
    Ok(exploration)
}

pub fn run(cfg: &Configuration, scheduler: Scheduler<'_>) -> Result<RunReport, RuntimeError> {
    match scheduler {
        Scheduler::Seeded { seed, max_steps } => {
            let outcome = run_seeded(cfg, seed, max_steps)?;
            Ok(RunReport {
                states_explored: outcome.steps + 1,
                outcomes: vec![outcome],
            })
        }
        Scheduler::Interactive { chooser, max_steps } => {
            let outcome = run_interactive(cfg, max_steps, chooser)?;
            Ok(RunReport {
                states_explored: outcome.steps + 1,
                outcomes: vec![outcome],
            })
        }
        Scheduler::Exhaustive { depth } => {
            let exploration = explore(cfg, depth)?;
            Ok(RunReport {
                states_explored: exploration.states.len(),
                outcomes: exploration.terminals.into_values().collect(),
            })
        }
    }
}
