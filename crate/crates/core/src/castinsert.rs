//! Compilation of well-typed surface processes into the cast calculus.
//!
//! Every prefix whose typing used `~` gets a cast on its subject from the
//! declared type to the type the prefix needs. Reverse outputs advertise the
//! flipped capability of each argument and become ordinary outputs. Casts
//! `T ⇒ T` are not generated, but their sites are still recorded.

use std::fmt;

use crate::parser::{Program, Span};
use crate::syntax::{Cast, CastChannel, CastProcess, Name, SurfaceProcess, Type, TypeEnv};
use crate::typecheck::{check, TypeDiagnostic};

/// Flip the top-level capability; `dyn` is its own reverse. Argument types
/// are left alone.
pub fn reverse_type(t: &Type) -> Type {
    match t {
        Type::Dyn => Type::Dyn,
        Type::Chan(cap, args) => Type::Chan(cap.reversed(), args.clone()),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum InsertionRule {
    In,
    Out,
    ReverseOut,
}

impl fmt::Display for InsertionRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InsertionRule::In => "ci-in",
            InsertionRule::Out => "ci-out",
            InsertionRule::ReverseOut => "ci-rout",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CastSite {
    pub node: usize,
    pub span: Option<Span>,
    pub rule: InsertionRule,
    pub channel: Name,
    pub cast: Cast,
    /// `source == target`: nothing was inserted.
    pub elided: bool,
}

impl fmt::Display for CastSite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(span) = self.span {
            write!(f, "{}: ", span.start)?;
        }
        write!(f, "[{}] ({} : {})", self.rule, self.channel, self.cast)?;
        if self.elided {
            f.write_str(" elided-trivial")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CompilationOutput {
    pub proc: CastProcess,
    pub sites: Vec<CastSite>,
}

struct Inserter {
    env: TypeEnv,
    next_node: usize,
    sites: Vec<CastSite>,
}

impl Inserter {
    fn ty(&self, name: &Name) -> Type {
        match self.env.get(name) {
            Some(t) => t.clone(),
            None => panic!("cast insertion on an unchecked process: `{name}` is unbound"),
        }
    }

    fn site(&mut self, node: usize, rule: InsertionRule, subject: &Name, target: Type) -> CastChannel {
        let cast = Cast::new(self.ty(subject), target);
        let elided = cast.is_trivial();
        self.sites.push(CastSite {
            node,
            span: None,
            rule,
            channel: subject.clone(),
            cast: cast.clone(),
            elided,
        });
        let bare = CastChannel::bare(subject.clone());
        if elided {
            bare
        } else {
            bare.pushed(cast)
        }
    }

    fn go(&mut self, p: &SurfaceProcess) -> CastProcess {
        let node = self.next_node;
        self.next_node += 1;
        match p {
            SurfaceProcess::Nil => CastProcess::Nil,
            SurfaceProcess::Par(l, r) => {
                let l = self.go(l);
                CastProcess::par(l, self.go(r))
            }
            SurfaceProcess::Choice(l, r) => {
                let l = self.go(l);
                CastProcess::choice(l, self.go(r))
            }
            SurfaceProcess::Replicate(body) => CastProcess::replicate(self.go(body)),
            SurfaceProcess::Restrict { name, ty, body } => {
                let mark = self.env.len();
                self.env.extend(name.clone(), ty.clone());
                let body = self.go(body);
                self.env.truncate(mark);
                CastProcess::restrict(name.clone(), ty.clone(), body)
            }
            SurfaceProcess::Input {
                subject,
                binders,
                body,
            } => {
                let target = Type::input(binders.iter().map(|(_, t)| t.clone()).collect());
                let subject = self.site(node, InsertionRule::In, subject, target);
                let mark = self.env.len();
                for (n, t) in binders {
                    self.env.extend(n.clone(), t.clone());
                }
                let body = self.go(body);
                self.env.truncate(mark);
                CastProcess::Input {
                    subject,
                    binders: binders.clone(),
                    body: Box::new(body),
                }
            }
            SurfaceProcess::Output {
                subject,
                args,
                body,
            } => {
                let target = Type::output(args.iter().map(|a| self.ty(a)).collect());
                let subject = self.site(node, InsertionRule::Out, subject, target);
                CastProcess::Output {
                    subject,
                    args: args.iter().cloned().map(CastChannel::bare).collect(),
                    body: Box::new(self.go(body)),
                }
            }
            SurfaceProcess::ReverseOutput {
                subject,
                args,
                body,
            } => {
                let target = Type::output(args.iter().map(|a| reverse_type(&self.ty(a))).collect());
                let subject = self.site(node, InsertionRule::ReverseOut, subject, target);
                CastProcess::Output {
                    subject,
                    args: args.iter().cloned().map(CastChannel::bare).collect(),
                    body: Box::new(self.go(body)),
                }
            }
        }
    }
}

/// `Γ ⊢ P ⇝ P′ : ok`. The caller must have checked `P` under `env`; an
/// unbound name panics.
pub fn insert_casts(env: &TypeEnv, p: &SurfaceProcess) -> CompilationOutput {
    let mut inserter = Inserter {
        env: env.clone(),
        next_node: 0,
        sites: Vec::new(),
    };
    let proc = inserter.go(p);
    CompilationOutput {
        proc,
        sites: inserter.sites,
    }
}

/// Type check, then insert casts. Never compiles a rejected process.
pub fn compile(env: &TypeEnv, p: &SurfaceProcess) -> Result<CompilationOutput, Vec<TypeDiagnostic>> {
    check(env, p)?;
    Ok(insert_casts(env, p))
}

pub fn compile_program(program: &Program) -> Result<CompilationOutput, Vec<TypeDiagnostic>> {
    let mut out = compile(&program.env, &program.proc).map_err(|mut ds| {
        for d in &mut ds {
            d.span = program.span_of(d.node);
        }
        ds
    })?;
    for site in &mut out.sites {
        site.span = program.span_of(site.node);
    }
    Ok(out)
}

/// Compile every block of a system and compose the results in parallel.
/// Diagnostics from all rejected blocks are returned together.
pub fn compile_system(programs: &[Program]) -> Result<CompilationOutput, Vec<TypeDiagnostic>> {
    let mut procs = Vec::new();
    let mut sites = Vec::new();
    let mut errors = Vec::new();
    for program in programs {
        match compile_program(program) {
            Ok(out) => {
                procs.push(out.proc);
                sites.extend(out.sites);
            }
            Err(ds) => errors.extend(ds),
        }
    }
    if !errors.is_empty() {
        return Err(errors);
    }
    let proc = procs
        .into_iter()
        .reduce(CastProcess::par)
        .unwrap_or(CastProcess::Nil);
    Ok(CompilationOutput { proc, sites })
}
