//! Abstract syntax for the surface calculus and the cast calculus.
//!
//! Both calculi share [`Type`], [`Name`] and [`TypeEnv`]. The surface
//! calculus ([`SurfaceProcess`]) is what programmers write; it has the
//! reverse output but no casts. The cast calculus ([`CastProcess`]) is what
//! cast insertion produces and the runtime executes; channels there are
//! [`CastChannel`]s and `typeError` is a process.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Capability {
    Input,
    Output,
}

impl Capability {
    pub fn reversed(self) -> Capability {
        match self {
            Capability::Input => Capability::Output,
            Capability::Output => Capability::Input,
        }
    }
}

impl fmt::Display for Capability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Capability::Input => f.write_str("i"),
            Capability::Output => f.write_str("o"),
        }
    }
}

/// A gradual channel type: either the dynamic type or a capability type
/// `I·(T1, …, Tn)`. Arity is part of a type's identity.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Type {
    Dyn,
    Chan(Capability, Vec<Type>),
}

impl Type {
    pub fn input(args: Vec<Type>) -> Type {
        Type::Chan(Capability::Input, args)
    }

    pub fn output(args: Vec<Type>) -> Type {
        Type::Chan(Capability::Output, args)
    }

    pub fn is_dyn(&self) -> bool {
        matches!(self, Type::Dyn)
    }

    pub fn capability(&self) -> Option<Capability> {
        match self {
            Type::Dyn => None,
            Type::Chan(cap, _) => Some(*cap),
        }
    }

    /// True if `dyn` occurs anywhere in the type.
    pub fn mentions_dyn(&self) -> bool {
        match self {
            Type::Dyn => true,
            Type::Chan(_, args) => args.iter().any(Type::mentions_dyn),
        }
    }

    /// Number of type constructors in the tree (`dyn` counts as one).
    pub fn size(&self) -> usize {
        match self {
            Type::Dyn => 1,
            Type::Chan(_, args) => 1 + args.iter().map(Type::size).sum::<usize>(),
        }
    }
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Type::Dyn => f.write_str("dyn"),
            Type::Chan(cap, args) => {
                write!(f, "{cap}(")?;
                for (i, arg) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{arg}")?;
                }
                f.write_str(")")
            }
        }
    }
}

/// A channel name. User-written names have index 0; positive indices are
/// only ever introduced by alpha-renaming.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Name {
    pub base: String,
    pub index: u32,
}

impl Name {
    pub fn new(base: impl Into<String>) -> Name {
        Name {
            base: base.into(),
            index: 0,
        }
    }

    pub fn with_index(base: impl Into<String>, index: u32) -> Name {
        Name {
            base: base.into(),
            index,
        }
    }

    /// Smallest variant of this name with index at least `min_index` that
    /// does not occur in `avoid`.
    pub fn freshen(&self, min_index: u32, avoid: &BTreeSet<Name>) -> Name {
        let mut index = min_index;
        loop {
            let candidate = Name::with_index(self.base.clone(), index);
            if !avoid.contains(&candidate) {
                return candidate;
            }
            index += 1;
        }
    }
}

impl fmt::Display for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.index == 0 {
            f.write_str(&self.base)
        } else {
            write!(f, "{}#{}", self.base, self.index)
        }
    }
}

impl From<&str> for Name {
    fn from(s: &str) -> Name {
        Name::new(s)
    }
}

/// Finite map from names to types. Later bindings shadow earlier ones.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TypeEnv {
    bindings: Vec<(Name, Type)>,
}

impl TypeEnv {
    pub fn new() -> TypeEnv {
        TypeEnv::default()
    }

    pub fn get(&self, name: &Name) -> Option<&Type> {
        self.bindings
            .iter()
            .rev()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    pub fn lookup(&self, name: &Name) -> Result<&Type, UnboundName> {
        self.get(name).ok_or_else(|| UnboundName(name.clone()))
    }

    pub fn contains(&self, name: &Name) -> bool {
        self.get(name).is_some()
    }

    pub fn extend(&mut self, name: Name, ty: Type) {
        self.bindings.push((name, ty));
    }

    pub fn with(mut self, name: impl Into<Name>, ty: Type) -> TypeEnv {
        self.extend(name.into(), ty);
        self
    }

    pub fn len(&self) -> usize {
        self.bindings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bindings.is_empty()
    }

    /// Drop every binding pushed after the environment had `len` entries.
    pub fn truncate(&mut self, len: usize) {
        self.bindings.truncate(len);
    }

    /// Bindings in insertion order, shadowed entries included.
    pub fn iter(&self) -> impl Iterator<Item = &(Name, Type)> {
        self.bindings.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut (Name, Type)> {
        self.bindings.iter_mut()
    }
}

impl FromIterator<(Name, Type)> for TypeEnv {
    fn from_iter<I: IntoIterator<Item = (Name, Type)>>(iter: I) -> TypeEnv {
        TypeEnv {
            bindings: iter.into_iter().collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("unbound channel `{0}`")]
pub struct UnboundName(pub Name);

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum SurfaceProcess {
    Nil,
    Input {
        subject: Name,
        binders: Vec<(Name, Type)>,
        body: Box<SurfaceProcess>,
    },
    Output {
        subject: Name,
        args: Vec<Name>,
        body: Box<SurfaceProcess>,
    },
    ReverseOutput {
        subject: Name,
        args: Vec<Name>,
        body: Box<SurfaceProcess>,
    },
    Par(Box<SurfaceProcess>, Box<SurfaceProcess>),
    Choice(Box<SurfaceProcess>, Box<SurfaceProcess>),
    Restrict {
        name: Name,
        ty: Type,
        body: Box<SurfaceProcess>,
    },
    Replicate(Box<SurfaceProcess>),
}

impl SurfaceProcess {
    pub fn input(subject: impl Into<Name>, binders: Vec<(Name, Type)>, body: SurfaceProcess) -> Self {
        SurfaceProcess::Input {
            subject: subject.into(),
            binders,
            body: Box::new(body),
        }
    }

    pub fn output(subject: impl Into<Name>, args: Vec<Name>, body: SurfaceProcess) -> Self {
        SurfaceProcess::Output {
            subject: subject.into(),
            args,
            body: Box::new(body),
        }
    }

    pub fn reverse_output(subject: impl Into<Name>, args: Vec<Name>, body: SurfaceProcess) -> Self {
        SurfaceProcess::ReverseOutput {
            subject: subject.into(),
            args,
            body: Box::new(body),
        }
    }

    pub fn par(left: SurfaceProcess, right: SurfaceProcess) -> Self {
        SurfaceProcess::Par(Box::new(left), Box::new(right))
    }

    pub fn choice(left: SurfaceProcess, right: SurfaceProcess) -> Self {
        SurfaceProcess::Choice(Box::new(left), Box::new(right))
    }

    pub fn restrict(name: impl Into<Name>, ty: Type, body: SurfaceProcess) -> Self {
        SurfaceProcess::Restrict {
            name: name.into(),
            ty,
            body: Box::new(body),
        }
    }

    pub fn replicate(body: SurfaceProcess) -> Self {
        SurfaceProcess::Replicate(Box::new(body))
    }

    /// Number of process nodes, counted the same way as pre-order node ids.
    pub fn node_count(&self) -> usize {
        1 + self.children().iter().map(|c| c.node_count()).sum::<usize>()
    }

    pub fn children(&self) -> Vec<&SurfaceProcess> {
        match self {
            SurfaceProcess::Nil => vec![],
            SurfaceProcess::Input { body, .. }
            | SurfaceProcess::Output { body, .. }
            | SurfaceProcess::ReverseOutput { body, .. }
            | SurfaceProcess::Restrict { body, .. }
            | SurfaceProcess::Replicate(body) => vec![body],
            SurfaceProcess::Par(l, r) | SurfaceProcess::Choice(l, r) => vec![l, r],
        }
    }

    /// Erase the surface-only distinction and view this as a cast-free
    /// cast-calculus term (reverse outputs become plain outputs).
    pub fn to_cast_free(&self) -> CastProcess {
        match self {
            SurfaceProcess::Nil => CastProcess::Nil,
            SurfaceProcess::Input {
                subject,
                binders,
                body,
            } => CastProcess::Input {
                subject: CastChannel::bare(subject.clone()),
                binders: binders.clone(),
                body: Box::new(body.to_cast_free()),
            },
            SurfaceProcess::Output {
                subject,
                args,
                body,
            }
            | SurfaceProcess::ReverseOutput {
                subject,
                args,
                body,
            } => CastProcess::Output {
                subject: CastChannel::bare(subject.clone()),
                args: args.iter().cloned().map(CastChannel::bare).collect(),
                body: Box::new(body.to_cast_free()),
            },
            SurfaceProcess::Par(l, r) => {
                CastProcess::Par(Box::new(l.to_cast_free()), Box::new(r.to_cast_free()))
            }
            SurfaceProcess::Choice(l, r) => {
                CastProcess::Choice(Box::new(l.to_cast_free()), Box::new(r.to_cast_free()))
            }
            SurfaceProcess::Restrict { name, ty, body } => CastProcess::Restrict {
                name: name.clone(),
                ty: ty.clone(),
                body: Box::new(body.to_cast_free()),
            },
            SurfaceProcess::Replicate(body) => CastProcess::Replicate(Box::new(body.to_cast_free())),
        }
    }
}

/// One cast frame `source ⇒ target`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cast {
    pub source: Type,
    pub target: Type,
}

impl Cast {
    pub fn new(source: Type, target: Type) -> Cast {
        Cast { source, target }
    }

    pub fn is_trivial(&self) -> bool {
        self.source == self.target
    }
}

impl fmt::Display for Cast {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} => {}", self.source, self.target)
    }
}

/// A channel name wrapped in zero or more casts. `casts` is ordered from the
/// innermost frame (index 0) to the outermost (last).
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CastChannel {
    pub base: Name,
    pub casts: Vec<Cast>,
}

impl CastChannel {
    pub fn bare(base: Name) -> CastChannel {
        CastChannel {
            base,
            casts: Vec::new(),
        }
    }

    pub fn with_casts(base: Name, casts: Vec<Cast>) -> CastChannel {
        CastChannel { base, casts }
    }

    pub fn is_bare(&self) -> bool {
        self.casts.is_empty()
    }

    /// Wrap one more cast around the channel.
    pub fn push(&mut self, cast: Cast) {
        self.casts.push(cast);
    }

    pub fn pushed(mut self, cast: Cast) -> CastChannel {
        self.push(cast);
        self
    }

    pub fn outermost(&self) -> Option<&Cast> {
        self.casts.last()
    }

    /// Consecutive frames agree: each frame's target is the next one's source.
    pub fn is_adjacent(&self) -> bool {
        self.casts.windows(2).all(|w| w[0].target == w[1].source)
    }

    pub fn depth(&self) -> usize {
        self.casts.len()
    }
}

/// The channel name at the bottom of a cast stack.
pub fn ch(c: &CastChannel) -> &Name {
    &c.base
}

impl From<Name> for CastChannel {
    fn from(n: Name) -> CastChannel {
        CastChannel::bare(n)
    }
}

impl fmt::Display for CastChannel {
    /// Adjacent frames print in collapsed chain form `(a : T1 => T2 => T3)`;
    /// a non-adjacent boundary opens a new nesting level.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.casts.is_empty() {
            return write!(f, "{}", self.base);
        }
        let mut groups: Vec<&[Cast]> = Vec::new();
        let mut start = 0;
        for i in 1..self.casts.len() {
            if self.casts[i - 1].target != self.casts[i].source {
                groups.push(&self.casts[start..i]);
                start = i;
            }
        }
        groups.push(&self.casts[start..]);
        for _ in 0..groups.len() {
            f.write_str("(")?;
        }
        write!(f, "{}", self.base)?;
        for group in groups {
            write!(f, " : {}", group[0].source)?;
            for cast in group {
                write!(f, " => {}", cast.target)?;
            }
            f.write_str(")")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum CastProcess {
    Nil,
    Input {
        subject: CastChannel,
        binders: Vec<(Name, Type)>,
        body: Box<CastProcess>,
    },
    Output {
        subject: CastChannel,
        args: Vec<CastChannel>,
        body: Box<CastProcess>,
    },
    Par(Box<CastProcess>, Box<CastProcess>),
    Choice(Box<CastProcess>, Box<CastProcess>),
    Restrict {
        name: Name,
        ty: Type,
        body: Box<CastProcess>,
    },
    Replicate(Box<CastProcess>),
    TypeError,
}

impl CastProcess {
    pub fn input(subject: impl Into<CastChannel>, binders: Vec<(Name, Type)>, body: CastProcess) -> Self {
        CastProcess::Input {
            subject: subject.into(),
            binders,
            body: Box::new(body),
        }
    }

    pub fn output(subject: impl Into<CastChannel>, args: Vec<CastChannel>, body: CastProcess) -> Self {
        CastProcess::Output {
            subject: subject.into(),
            args,
            body: Box::new(body),
        }
    }

    pub fn par(left: CastProcess, right: CastProcess) -> Self {
        CastProcess::Par(Box::new(left), Box::new(right))
    }

    pub fn choice(left: CastProcess, right: CastProcess) -> Self {
        CastProcess::Choice(Box::new(left), Box::new(right))
    }

    pub fn restrict(name: impl Into<Name>, ty: Type, body: CastProcess) -> Self {
        CastProcess::Restrict {
            name: name.into(),
            ty,
            body: Box::new(body),
        }
    }

    pub fn replicate(body: CastProcess) -> Self {
        CastProcess::Replicate(Box::new(body))
    }

    /// True when no channel anywhere in the term carries a cast.
    pub fn is_cast_free(&self) -> bool {
        match self {
            CastProcess::Nil | CastProcess::TypeError => true,
            CastProcess::Input { subject, body, .. } => subject.is_bare() && body.is_cast_free(),
            CastProcess::Output {
                subject,
                args,
                body,
            } => subject.is_bare() && args.iter().all(CastChannel::is_bare) && body.is_cast_free(),
            CastProcess::Par(l, r) | CastProcess::Choice(l, r) => l.is_cast_free() && r.is_cast_free(),
            CastProcess::Restrict { body, .. } | CastProcess::Replicate(body) => body.is_cast_free(),
        }
    }

    /// Remove every cast, keeping bare base names.
    pub fn erase_casts(&self) -> CastProcess {
        let strip = |c: &CastChannel| CastChannel::bare(c.base.clone());
        match self {
            CastProcess::Nil => CastProcess::Nil,
            CastProcess::TypeError => CastProcess::TypeError,
            CastProcess::Input {
                subject,
                binders,
                body,
            } => CastProcess::Input {
                subject: strip(subject),
                binders: binders.clone(),
                body: Box::new(body.erase_casts()),
            },
            CastProcess::Output {
                subject,
                args,
                body,
            } => CastProcess::Output {
                subject: strip(subject),
                args: args.iter().map(strip).collect(),
                body: Box::new(body.erase_casts()),
            },
            CastProcess::Par(l, r) => CastProcess::par(l.erase_casts(), r.erase_casts()),
            CastProcess::Choice(l, r) => CastProcess::choice(l.erase_casts(), r.erase_casts()),
            CastProcess::Restrict { name, ty, body } => {
                CastProcess::restrict(name.clone(), ty.clone(), body.erase_casts())
            }
            CastProcess::Replicate(body) => CastProcess::replicate(body.erase_casts()),
        }
    }

    /// Every cast channel in the term, subjects and arguments, in pre-order.
    pub fn channels(&self) -> Vec<&CastChannel> {
        let mut out = Vec::new();
        self.collect_channels(&mut out);
        out
    }

    fn collect_channels<'a>(&'a self, out: &mut Vec<&'a CastChannel>) {
        match self {
            CastProcess::Nil | CastProcess::TypeError => {}
            CastProcess::Input { subject, body, .. } => {
                out.push(subject);
                body.collect_channels(out);
            }
            CastProcess::Output {
                subject,
                args,
                body,
            } => {
                out.push(subject);
                out.extend(args.iter());
                body.collect_channels(out);
            }
            CastProcess::Par(l, r) | CastProcess::Choice(l, r) => {
                l.collect_channels(out);
                r.collect_channels(out);
            }
            CastProcess::Restrict { body, .. } | CastProcess::Replicate(body) => body.collect_channels(out),
        }
    }

    /// Constructor tag sequence in pre-order; substitution must leave it unchanged.
    pub fn shape(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        self.collect_shape(&mut out);
        out
    }

    fn collect_shape(&self, out: &mut Vec<&'static str>) {
        match self {
            CastProcess::Nil => out.push("nil"),
            CastProcess::TypeError => out.push("typeError"),
            CastProcess::Input { body, .. } => {
                out.push("input");
                body.collect_shape(out);
            }
            CastProcess::Output { body, .. } => {
                out.push("output");
                body.collect_shape(out);
            }
            CastProcess::Par(l, r) => {
                out.push("par");
                l.collect_shape(out);
                r.collect_shape(out);
            }
            CastProcess::Choice(l, r) => {
                out.push("choice");
                l.collect_shape(out);
                r.collect_shape(out);
            }
            CastProcess::Restrict { body, .. } => {
                out.push("restrict");
                body.collect_shape(out);
            }
            CastProcess::Replicate(body) => {
                out.push("replicate");
                body.collect_shape(out);
            }
        }
    }
}

/// Free names of a process: names with an occurrence not under a binding
/// input or restriction for that name.
pub trait FreeNames {
    fn collect_free(&self, bound: &mut Vec<Name>, out: &mut BTreeSet<Name>);

    fn free_names(&self) -> BTreeSet<Name> {
        let mut out = BTreeSet::new();
        self.collect_free(&mut Vec::new(), &mut out);
        out
    }
}

fn note_free(name: &Name, bound: &[Name], out: &mut BTreeSet<Name>) {
    if !bound.contains(name) {
        out.insert(name.clone());
    }
}

impl FreeNames for SurfaceProcess {
    fn collect_free(&self, bound: &mut Vec<Name>, out: &mut BTreeSet<Name>) {
        match self {
            SurfaceProcess::Nil => {}
            SurfaceProcess::Input {
                subject,
                binders,
                body,
            } => {
                note_free(subject, bound, out);
                let mark = bound.len();
                bound.extend(binders.iter().map(|(n, _)| n.clone()));
                body.collect_free(bound, out);
                bound.truncate(mark);
            }
            SurfaceProcess::Output {
                subject,
                args,
                body,
            }
            | SurfaceProcess::ReverseOutput {
                subject,
                args,
                body,
            } => {
                note_free(subject, bound, out);
                for a in args {
                    note_free(a, bound, out);
                }
                body.collect_free(bound, out);
            }
            SurfaceProcess::Par(l, r) | SurfaceProcess::Choice(l, r) => {
                l.collect_free(bound, out);
                r.collect_free(bound, out);
            }
            SurfaceProcess::Restrict { name, body, .. } => {
                bound.push(name.clone());
                body.collect_free(bound, out);
                bound.pop();
            }
            SurfaceProcess::Replicate(body) => body.collect_free(bound, out),
        }
    }
}

impl FreeNames for CastProcess {
    fn collect_free(&self, bound: &mut Vec<Name>, out: &mut BTreeSet<Name>) {
        match self {
            CastProcess::Nil | CastProcess::TypeError => {}
            CastProcess::Input {
                subject,
                binders,
                body,
            } => {
                note_free(&subject.base, bound, out);
                let mark = bound.len();
                bound.extend(binders.iter().map(|(n, _)| n.clone()));
                body.collect_free(bound, out);
                bound.truncate(mark);
            }
            CastProcess::Output {
                subject,
                args,
                body,
            } => {
                note_free(&subject.base, bound, out);
                for a in args {
                    note_free(&a.base, bound, out);
                }
                body.collect_free(bound, out);
            }
            CastProcess::Par(l, r) | CastProcess::Choice(l, r) => {
                l.collect_free(bound, out);
                r.collect_free(bound, out);
            }
            CastProcess::Restrict { name, body, .. } => {
                bound.push(name.clone());
                body.collect_free(bound, out);
                bound.pop();
            }
            CastProcess::Replicate(body) => body.collect_free(bound, out),
        }
    }
}

pub fn free_names<P: FreeNames>(p: &P) -> BTreeSet<Name> {
    p.free_names()
}

/// Every name occurring in the term, bound or free.
pub fn all_names(p: &CastProcess) -> BTreeSet<Name> {
    fn go(p: &CastProcess, out: &mut BTreeSet<Name>) {
        match p {
            CastProcess::Nil | CastProcess::TypeError => {}
            CastProcess::Input {
                subject,
                binders,
                body,
            } => {
                out.insert(subject.base.clone());
                out.extend(binders.iter().map(|(n, _)| n.clone()));
                go(body, out);
            }
            CastProcess::Output {
                subject,
                args,
                body,
            } => {
                out.insert(subject.base.clone());
                out.extend(args.iter().map(|a| a.base.clone()));
                go(body, out);
            }
            CastProcess::Par(l, r) | CastProcess::Choice(l, r) => {
                go(l, out);
                go(r, out);
            }
            CastProcess::Restrict { name, body, .. } => {
                out.insert(name.clone());
                go(body, out);
            }
            CastProcess::Replicate(body) => go(body, out),
        }
    }
    let mut out = BTreeSet::new();
    go(p, &mut out);
    out
}

pub type Substitution = BTreeMap<Name, CastChannel>;

/// Capture-avoiding simultaneous substitution of cast channels for names.
///
/// A substituted name that already carries casts keeps them: the incoming
/// channel's frames go underneath, so `(b : dyn => o(T))` with
/// `b ↦ (x : o(T) => dyn)` becomes `(x : o(T) => dyn => o(T))`.
pub fn substitute(p: &CastProcess, mapping: &Substitution) -> CastProcess {
    if mapping.is_empty() {
        return p.clone();
    }
    let range: BTreeSet<Name> = mapping.values().map(|c| c.base.clone()).collect();
    subst_in(p, mapping, &range)
}

fn subst_channel(c: &CastChannel, mapping: &Substitution) -> CastChannel {
    match mapping.get(&c.base) {
        None => c.clone(),
        Some(replacement) => {
            let mut casts = replacement.casts.clone();
            casts.extend(c.casts.iter().cloned());
            CastChannel::with_casts(replacement.base.clone(), casts)
        }
    }
}

/// Push substitution under binders `binders`: shadowed keys are dropped, and
/// binders that would capture a replacement's base are renamed.
fn enter_binders(
    binders: &[Name],
    body: &CastProcess,
    mapping: &Substitution,
    range: &BTreeSet<Name>,
) -> (Vec<Name>, Substitution) {
    let mut inner: Substitution = mapping
        .iter()
        .filter(|(k, _)| !binders.contains(k))
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    if inner.is_empty() {
        return (binders.to_vec(), inner);
    }
    let body_free = body.free_names();
    let live = inner.keys().any(|k| body_free.contains(k));
    let mut renamed = Vec::with_capacity(binders.len());
    let mut avoid: BTreeSet<Name> = body_free.clone();
    avoid.extend(range.iter().cloned());
    avoid.extend(inner.keys().cloned());
    avoid.extend(binders.iter().cloned());
    for b in binders {
        if live && range.contains(b) {
            let fresh = b.freshen(b.index + 1, &avoid);
            avoid.insert(fresh.clone());
            inner.insert(b.clone(), CastChannel::bare(fresh.clone()));
            renamed.push(fresh);
        } else {
            renamed.push(b.clone());
        }
    }
    (renamed, inner)
}

fn subst_in(p: &CastProcess, mapping: &Substitution, range: &BTreeSet<Name>) -> CastProcess {
    match p {
        CastProcess::Nil => CastProcess::Nil,
        CastProcess::TypeError => CastProcess::TypeError,
        CastProcess::Input {
            subject,
            binders,
            body,
        } => {
            let names: Vec<Name> = binders.iter().map(|(n, _)| n.clone()).collect();
            let (renamed, inner) = enter_binders(&names, body, mapping, range);
            let new_binders = renamed
                .into_iter()
                .zip(binders.iter().map(|(_, t)| t.clone()))
                .collect();
            let inner_range: BTreeSet<Name> = inner.values().map(|c| c.base.clone()).collect();
            CastProcess::Input {
                subject: subst_channel(subject, mapping),
                binders: new_binders,
                body: Box::new(if inner.is_empty() {
                    (**body).clone()
                } else {
                    subst_in(body, &inner, &inner_range)
                }),
            }
        }
        CastProcess::Output {
            subject,
            args,
            body,
        } => CastProcess::Output {
            subject: subst_channel(subject, mapping),
            args: args.iter().map(|a| subst_channel(a, mapping)).collect(),
            body: Box::new(subst_in(body, mapping, range)),
        },
        CastProcess::Par(l, r) => CastProcess::par(subst_in(l, mapping, range), subst_in(r, mapping, range)),
        CastProcess::Choice(l, r) => {
            CastProcess::choice(subst_in(l, mapping, range), subst_in(r, mapping, range))
        }
        CastProcess::Restrict { name, ty, body } => {
            let (renamed, inner) = enter_binders(std::slice::from_ref(name), body, mapping, range);
            let inner_range: BTreeSet<Name> = inner.values().map(|c| c.base.clone()).collect();
            CastProcess::Restrict {
                name: renamed.into_iter().next().expect("one binder"),
                ty: ty.clone(),
                body: Box::new(if inner.is_empty() {
                    (**body).clone()
                } else {
                    subst_in(body, &inner, &inner_range)
                }),
            }
        }
        CastProcess::Replicate(body) => CastProcess::replicate(subst_in(body, mapping, range)),
    }
}

/// Rename free occurrences of names (no casts involved). Used for scope
/// extrusion and replication unfolding.
pub fn rename(p: &CastProcess, renaming: &BTreeMap<Name, Name>) -> CastProcess {
    let mapping: Substitution = renaming
        .iter()
        .map(|(k, v)| (k.clone(), CastChannel::bare(v.clone())))
        .collect();
    substitute(p, &mapping)
}

/// Alpha-equivalence: equal up to consistent renaming of bound names.
pub fn alpha_equal(p: &CastProcess, q: &CastProcess) -> bool {
    AlphaCx::default().procs(p, q)
}

#[derive(Default)]
struct AlphaCx {
    left: Vec<Name>,
    right: Vec<Name>,
}

impl AlphaCx {
    // Binder positions are compared by depth from the innermost binder.
    fn name(&self, a: &Name, b: &Name) -> bool {
        let pa = self.left.iter().rposition(|n| n == a);
        let pb = self.right.iter().rposition(|n| n == b);
        match (pa, pb) {
            (Some(i), Some(j)) => i == j,
            (None, None) => a == b,
            _ => false,
        }
    }

    fn chan(&self, a: &CastChannel, b: &CastChannel) -> bool {
        a.casts == b.casts && self.name(&a.base, &b.base)
    }

    fn bind<F: FnOnce(&mut Self) -> bool>(&mut self, l: &[Name], r: &[Name], f: F) -> bool {
        let (ml, mr) = (self.left.len(), self.right.len());
        self.left.extend(l.iter().cloned());
        self.right.extend(r.iter().cloned());
        let res = f(self);
        self.left.truncate(ml);
        self.right.truncate(mr);
        res
    }

    fn procs(&mut self, p: &CastProcess, q: &CastProcess) -> bool {
        use CastProcess as P;
        match (p, q) {
            (P::Nil, P::Nil) | (P::TypeError, P::TypeError) => true,
            (
                P::Input {
                    subject: s1,
                    binders: b1,
                    body: p1,
                },
                P::Input {
                    subject: s2,
                    binders: b2,
                    body: p2,
                },
            ) => {
                if !self.chan(s1, s2) || b1.len() != b2.len() {
                    return false;
                }
                if b1.iter().zip(b2).any(|((_, t1), (_, t2))| t1 != t2) {
                    return false;
                }
                let n1: Vec<Name> = b1.iter().map(|(n, _)| n.clone()).collect();
                let n2: Vec<Name> = b2.iter().map(|(n, _)| n.clone()).collect();
                self.bind(&n1, &n2, |cx| cx.procs(p1, p2))
            }
            (
                P::Output {
                    subject: s1,
                    args: a1,
                    body: p1,
                },
                P::Output {
                    subject: s2,
                    args: a2,
                    body: p2,
                },
            ) => {
                self.chan(s1, s2)
                    && a1.len() == a2.len()
                    && a1.iter().zip(a2).all(|(x, y)| self.chan(x, y))
                    && self.procs(p1, p2)
            }
            (P::Par(l1, r1), P::Par(l2, r2)) | (P::Choice(l1, r1), P::Choice(l2, r2)) => {
                self.procs(l1, l2) && self.procs(r1, r2)
            }
            (
                P::Restrict {
                    name: n1,
                    ty: t1,
                    body: p1,
                },
                P::Restrict {
                    name: n2,
                    ty: t2,
                    body: p2,
                },
            ) => {
                t1 == t2
                    && self.bind(std::slice::from_ref(n1), std::slice::from_ref(n2), |cx| {
                        cx.procs(p1, p2)
                    })
            }
            (P::Replicate(p1), P::Replicate(p2)) => self.procs(p1, p2),
            _ => false,
        }
    }
}

/// Canonical de Bruijn rendering of a term: bound names become `@k`, where
/// `k` counts binders outward from the occurrence. Names listed in `bound`
/// are treated as bound outside the term (outermost first). Two terms have
/// equal renderings iff they are alpha-equivalent.
pub fn de_bruijn(p: &CastProcess, bound: &[Name]) -> String {
    let mut out = String::new();
    let mut scope: Vec<Name> = bound.to_vec();
    db_proc(p, &mut scope, &mut out);
    out
}

fn db_name(n: &Name, scope: &[Name], out: &mut String) {
    match scope.iter().rposition(|m| m == n) {
        Some(pos) => {
            out.push('@');
            out.push_str(&(scope.len() - 1 - pos).to_string());
        }
        None => {
            out.push('\'');
            out.push_str(&n.base);
            out.push('#');
            out.push_str(&n.index.to_string());
        }
    }
}

fn db_chan(c: &CastChannel, scope: &[Name], out: &mut String) {
    out.push('[');
    db_name(&c.base, scope, out);
    for cast in &c.casts {
        out.push(':');
        out.push_str(&cast.to_string());
    }
    out.push(']');
}

fn db_proc(p: &CastProcess, scope: &mut Vec<Name>, out: &mut String) {
    match p {
        CastProcess::Nil => out.push('0'),
        CastProcess::TypeError => out.push('E'),
        CastProcess::Input {
            subject,
            binders,
            body,
        } => {
            out.push_str("in");
            db_chan(subject, scope, out);
            out.push('(');
            for (_, t) in binders {
                out.push_str(&t.to_string());
                out.push(';');
            }
            out.push(')');
            let mark = scope.len();
            scope.extend(binders.iter().map(|(n, _)| n.clone()));
            db_proc(body, scope, out);
            scope.truncate(mark);
        }
        CastProcess::Output {
            subject,
            args,
            body,
        } => {
            out.push_str("out");
            db_chan(subject, scope, out);
            out.push('<');
            for a in args {
                db_chan(a, scope, out);
            }
            out.push('>');
            db_proc(body, scope, out);
        }
        CastProcess::Par(l, r) => {
            out.push_str("par(");
            db_proc(l, scope, out);
            out.push(',');
            db_proc(r, scope, out);
            out.push(')');
        }
        CastProcess::Choice(l, r) => {
            out.push_str("sum(");
            db_proc(l, scope, out);
            out.push(',');
            db_proc(r, scope, out);
            out.push(')');
        }
        CastProcess::Restrict { name, ty, body } => {
            out.push_str("new{");
            out.push_str(&ty.to_string());
            out.push('}');
            scope.push(name.clone());
            db_proc(body, scope, out);
            scope.pop();
        }
        CastProcess::Replicate(body) => {
            out.push('!');
            db_proc(body, scope, out);
        }
    }
}
