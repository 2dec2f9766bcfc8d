//! Type consistency and the gradual judgement `Γ ⊢ P : ok`.

use std::fmt;

use crate::parser::{Program, Span};
use crate::syntax::{Capability, Name, SurfaceProcess, Type, TypeEnv};

/// `t ~ s`: equal up to `dyn` appearing on either side. Capability and arity
/// must agree; argument lists are compared pointwise.
pub fn consistent(t: &Type, s: &Type) -> bool {
    match (t, s) {
        (Type::Dyn, _) | (_, Type::Dyn) => true,
        (Type::Chan(c1, a1), Type::Chan(c2, a2)) => {
            c1 == c2 && a1.len() == a2.len() && a1.iter().zip(a2).all(|(x, y)| consistent(x, y))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Rule {
    TIn,
    TOut,
    EnvLookup,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rule::TIn => "t-in",
            Rule::TOut => "t-out",
            Rule::EnvLookup => "env-lookup",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Problem {
    /// `found` is the subject's type in the environment, `expected` the
    /// capability pattern the prefix needs.
    Inconsistent { expected: Type, found: Type },
    Unbound(Name),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TypeDiagnostic {
    /// Pre-order id of the offending process node.
    pub node: usize,
    pub span: Option<Span>,
    pub rule: Rule,
    pub problem: Problem,
}

impl fmt::Display for TypeDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.problem {
            Problem::Inconsistent { expected, found } => {
                write!(f, "[{}] expected {} ~ {}", self.rule, expected, found)
            }
            Problem::Unbound(name) => write!(f, "[{}] unbound channel {}", self.rule, name),
        }
    }
}

/// One consistency check made while checking a prefix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConsistencyCheck {
    pub node: usize,
    pub rule: Rule,
    /// Γ(a), the subject's declared type.
    pub found: Type,
    /// The pattern `i·(T̄)` or `o·(Γ(a1), …)`.
    pub expected: Type,
    pub holds: bool,
}

impl ConsistencyCheck {
    /// The check compared two syntactically equal types.
    pub fn is_reflexive(&self) -> bool {
        self.found == self.expected
    }
}

impl fmt::Display for ConsistencyCheck {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rel = if self.holds { "~" } else { "!~" };
        write!(f, "[{}] {} {} {}", self.rule, self.found, rel, self.expected)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CheckReport {
    pub diagnostics: Vec<TypeDiagnostic>,
    pub log: Vec<ConsistencyCheck>,
}

impl CheckReport {
    pub fn is_ok(&self) -> bool {
        self.diagnostics.is_empty()
    }
}

struct Checker {
    env: TypeEnv,
    next_node: usize,
    report: CheckReport,
}

impl Checker {
    fn lookup(&mut self, node: usize, name: &Name) -> Option<Type> {
        match self.env.get(name) {
            Some(t) => Some(t.clone()),
            None => {
                self.report.diagnostics.push(TypeDiagnostic {
                    node,
                    span: None,
                    rule: Rule::EnvLookup,
                    problem: Problem::Unbound(name.clone()),
                });
                None
            }
        }
    }

    fn relate(&mut self, node: usize, rule: Rule, found: Type, expected: Type) {
        let holds = consistent(&found, &expected);
        if !holds {
            self.report.diagnostics.push(TypeDiagnostic {
                node,
                span: None,
                rule,
                problem: Problem::Inconsistent {
                    expected: expected.clone(),
                    found: found.clone(),
                },
            });
        }
        self.report.log.push(ConsistencyCheck {
            node,
            rule,
            found,
            expected,
            holds,
        });
    }

    fn visit(&mut self, p: &SurfaceProcess) {
        let node = self.next_node;
        self.next_node += 1;
        match p {
            SurfaceProcess::Nil => {}
            SurfaceProcess::Par(l, r) | SurfaceProcess::Choice(l, r) => {
                self.visit(l);
                self.visit(r);
            }
            SurfaceProcess::Replicate(body) => self.visit(body),
            SurfaceProcess::Restrict { name, ty, body } => {
                let mark = self.env.len();
                self.env.extend(name.clone(), ty.clone());
                self.visit(body);
                self.env.truncate(mark);
            }
            SurfaceProcess::Input {
                subject,
                binders,
                body,
            } => {
                if let Some(found) = self.lookup(node, subject) {
                    let pattern = Type::input(binders.iter().map(|(_, t)| t.clone()).collect());
                    self.relate(node, Rule::TIn, found, pattern);
                }
                let mark = self.env.len();
                for (n, t) in binders {
                    self.env.extend(n.clone(), t.clone());
                }
                self.visit(body);
                self.env.truncate(mark);
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
                let found = self.lookup(node, subject);
                let arg_types: Vec<Option<Type>> = args.iter().map(|a| self.lookup(node, a)).collect();
                if let (Some(found), Some(arg_types)) =
                    (found, arg_types.into_iter().collect::<Option<Vec<Type>>>())
                {
                    self.relate(node, Rule::TOut, found, Type::output(arg_types));
                }
                self.visit(body);
            }
        }
    }
}

/// Gradual type checking with the full log of consistency checks performed.
pub fn check_logged(env: &TypeEnv, p: &SurfaceProcess) -> CheckReport {
    let mut checker = Checker {
        env: env.clone(),
        next_node: 0,
        report: CheckReport::default(),
    };
    checker.visit(p);
    checker.report
}

/// `Γ ⊢ P : ok`. On rejection every failing site is reported, in source order.
pub fn check(env: &TypeEnv, p: &SurfaceProcess) -> Result<(), Vec<TypeDiagnostic>> {
    let report = check_logged(env, p);
    if report.is_ok() {
        Ok(())
    } else {
        Err(report.diagnostics)
    }
}

/// Check a parsed program, attaching source spans to the diagnostics.
pub fn check_program(program: &Program) -> CheckReport {
    let mut report = check_logged(&program.env, &program.proc);
    for d in &mut report.diagnostics {
        d.span = program.span_of(d.node);
    }
    report
}

/// Reference checker for the fully static fragment: the same judgement with
/// `~` replaced by syntactic equality.
pub fn check_static(env: &TypeEnv, p: &SurfaceProcess) -> Result<(), Vec<TypeDiagnostic>> {
    fn go(env: &mut TypeEnv, p: &SurfaceProcess, node: &mut usize, out: &mut Vec<TypeDiagnostic>) {
        let here = *node;
        *node += 1;
        let unbound = |n: &Name| TypeDiagnostic {
            node: here,
            span: None,
            rule: Rule::EnvLookup,
            problem: Problem::Unbound(n.clone()),
        };
        match p {
            SurfaceProcess::Nil => {}
            SurfaceProcess::Par(l, r) | SurfaceProcess::Choice(l, r) => {
                go(env, l, node, out);
                go(env, r, node, out);
            }
            SurfaceProcess::Replicate(b) => go(env, b, node, out),
            SurfaceProcess::Restrict { name, ty, body } => {
                let mark = env.len();
                env.extend(name.clone(), ty.clone());
                go(env, body, node, out);
                env.truncate(mark);
            }
            SurfaceProcess::Input {
                subject,
                binders,
                body,
            } => {
                let want = Type::Chan(Capability::Input, binders.iter().map(|(_, t)| t.clone()).collect());
                match env.get(subject) {
                    None => out.push(unbound(subject)),
                    Some(have) if *have != want => out.push(TypeDiagnostic {
                        node: here,
                        span: None,
                        rule: Rule::TIn,
                        problem: Problem::Inconsistent {
                            expected: want,
                            found: have.clone(),
                        },
                    }),
                    Some(_) => {}
                }
                let mark = env.len();
                for (n, t) in binders {
                    env.extend(n.clone(), t.clone());
                }
                go(env, body, node, out);
                env.truncate(mark);
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
                let have = env.get(subject).cloned();
                if have.is_none() {
                    out.push(unbound(subject));
                }
                let mut arg_types = Vec::new();
                for a in args {
                    match env.get(a) {
                        Some(t) => arg_types.push(t.clone()),
                        None => out.push(unbound(a)),
                    }
                }
                if let Some(have) = have {
                    if arg_types.len() == args.len() {
                        let want = Type::Chan(Capability::Output, arg_types);
                        if have != want {
                            out.push(TypeDiagnostic {
                                node: here,
                                span: None,
                                rule: Rule::TOut,
                                problem: Problem::Inconsistent {
                                    expected: want,
                                    found: have,
                                },
                            });
                        }
                    }
                }
                go(env, body, node, out);
            }
        }
    }
    let mut out = Vec::new();
    go(&mut env.clone(), p, &mut 0, &mut out);
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

/// Static check of a parsed program with spans attached.
pub fn check_program_static(program: &Program) -> Result<(), Vec<TypeDiagnostic>> {
    check_static(&program.env, &program.proc).map_err(|mut ds| {
        for d in &mut ds {
            d.span = program.span_of(d.node);
        }
        ds
    })
}
