//! Tree-walking evaluator with line tracing and a wall-clock deadline.

use std::collections::{BTreeSet, HashMap};
use std::rc::Rc;
use std::time::Instant;

use crate::parser::{Expr, FuncDef, Stmt, StmtKind, Target};
use crate::value::Value;

pub const TIMEOUT_KIND: &str = "__timeout__";
const MAX_DEPTH: usize = 200;
const MAX_LEN: usize = 10_000_000;

#[derive(Debug, Clone)]
pub struct Exc {
    pub kind: String,
    pub msg: String,
}

fn exc<T>(kind: &str, msg: impl Into<String>) -> R<T> {
    Err(Exc {
        kind: kind.into(),
        msg: msg.into(),
    })
}

type R<T> = Result<T, Exc>;
type Scope = Option<HashMap<String, Value>>;

enum Flow {
    Normal,
    Return(Value),
    Break,
    Continue,
}

pub struct Interp {
    pub globals: HashMap<String, Value>,
    pub covered: BTreeSet<u32>,
    pub tracing: bool,
    deadline: Option<Instant>,
    steps: u64,
    depth: usize,
}

const BUILTINS: &[&str] = &[
    "len",
    "abs",
    "min",
    "max",
    "sum",
    "sorted",
    "str",
    "int",
    "float",
    "bool",
    "list",
    "tuple",
    "range",
    "print",
    "reversed",
    "enumerate",
    "zip",
    "any",
    "all",
    "round",
    "ord",
    "chr",
    "isinstance",
];

impl Interp {
    pub fn new(deadline: Option<Instant>) -> Self {
        Interp {
            globals: HashMap::new(),
            covered: BTreeSet::new(),
            tracing: false,
            deadline,
            steps: 0,
            depth: 0,
        }
    }

    fn tick(&mut self) -> R<()> {
        self.steps += 1;
        if self.steps % 256 == 0 {
            if let Some(d) = self.deadline {
                if Instant::now() >= d {
                    return exc(TIMEOUT_KIND, "time limit exceeded");
                }
            }
        }
        Ok(())
    }

    pub fn run_module(&mut self, body: &[Stmt]) -> R<()> {
        let mut scope: Scope = None;
        match self.exec_block(body, &mut scope)? {
            Flow::Normal => Ok(()),
            Flow::Return(_) => exc("SyntaxError", "'return' outside function"),
            _ => exc("SyntaxError", "'break' outside loop"),
        }
    }

    fn exec_block(&mut self, body: &[Stmt], scope: &mut Scope) -> R<Flow> {
        for stmt in body {
            match self.exec(stmt, scope)? {
                Flow::Normal => {}
                other => return Ok(other),
            }
        }
        Ok(Flow::Normal)
    }

    fn exec(&mut self, stmt: &Stmt, scope: &mut Scope) -> R<Flow> {
        self.tick()?;
        if self.tracing && scope.is_some() {
            self.covered.insert(stmt.line);
        }
        match &stmt.kind {
            StmtKind::Expr(e) => {
                self.eval(e, scope)?;
            }
            StmtKind::Assign(targets, value) => {
                let v = self.eval(value, scope)?;
                for t in targets {
                    self.assign(t, v.clone(), scope)?;
                }
            }
            StmtKind::AugAssign(target, op, value) => {
                let current = match target {
                    Target::Name(n) => self.lookup(n, scope)?,
                    Target::Index(obj, idx) => {
                        let o = self.eval(obj, scope)?;
                        let i = self.eval(idx, scope)?;
                        index(&o, &i)?
                    }
                    Target::Tuple(_) => return exc("SyntaxError", "illegal augmented assignment"),
                };
                let rhs = self.eval(value, scope)?;
                let v = match (op, &current) {
                    (&"+", Value::List(items)) => {
                        let extra = iterate(&rhs)?;
                        items.borrow_mut().extend(extra);
                        current.clone()
                    }
                    _ => binary(op, &current, &rhs)?,
                };
                self.assign(target, v, scope)?;
            }
            StmtKind::Return(e) => {
                let v = match e {
                    Some(e) => self.eval(e, scope)?,
                    None => Value::None,
                };
                return Ok(Flow::Return(v));
            }
            StmtKind::If(arms, orelse) => {
                for (cond, body) in arms {
                    if self.eval(cond, scope)?.truthy() {
                        return self.exec_block(body, scope);
                    }
                }
                if let Some(body) = orelse {
                    return self.exec_block(body, scope);
                }
            }
            StmtKind::While(cond, body) => {
                while self.eval(cond, scope)?.truthy() {
                    self.tick()?;
                    match self.exec_block(body, scope)? {
                        Flow::Break => break,
                        Flow::Return(v) => return Ok(Flow::Return(v)),
                        _ => {}
                    }
                }
            }
            StmtKind::For(target, iter, body) => {
                let items = iterate(&self.eval(iter, scope)?)?;
                for item in items {
                    self.tick()?;
                    self.assign(target, item, scope)?;
                    match self.exec_block(body, scope)? {
                        Flow::Break => break,
                        Flow::Return(v) => return Ok(Flow::Return(v)),
                        _ => {}
                    }
                }
            }
            StmtKind::Def(def) => {
                let f = Value::Func(def.clone());
                self.assign(&Target::Name(def.name.clone()), f, scope)?;
            }
            StmtKind::Pass | StmtKind::Import => {}
            StmtKind::Break => return Ok(Flow::Break),
            StmtKind::Continue => return Ok(Flow::Continue),
            StmtKind::Raise(e) => {
                let kind = match e {
                    None => "RuntimeError".to_string(),
                    Some(Expr::Name(n)) => n.clone(),
                    Some(Expr::Call(f, args)) => match &**f {
                        Expr::Name(n) => {
                            let msg = match args.first() {
                                Some(a) => self.eval(a, scope)?.to_str(),
                                None => String::new(),
                            };
                            return exc(n, msg);
                        }
                        _ => "TypeError".into(),
                    },
                    Some(_) => "TypeError".into(),
                };
                return exc(&kind, "");
            }
            StmtKind::Assert(cond, msg) => {
                if !self.eval(cond, scope)?.truthy() {
                    let m = match msg {
                        Some(m) => self.eval(m, scope)?.to_str(),
                        None => String::new(),
                    };
                    return exc("AssertionError", m);
                }
            }
        }
        Ok(Flow::Normal)
    }

    fn assign(&mut self, target: &Target, value: Value, scope: &mut Scope) -> R<()> {
        match target {
            Target::Name(n) => {
                match scope {
                    Some(vars) => vars.insert(n.clone(), value),
                    None => self.globals.insert(n.clone(), value),
                };
            }
            Target::Tuple(targets) => {
                let items = iterate(&value)?;
                if items.len() != targets.len() {
                    return exc("ValueError", "wrong number of values to unpack");
                }
                for (t, v) in targets.iter().zip(items) {
                    self.assign(t, v, scope)?;
                }
            }
            Target::Index(obj, idx) => {
                let o = self.eval(obj, scope)?;
                let i = self.eval(idx, scope)?;
                match &o {
                    Value::List(items) => {
                        let mut items = items.borrow_mut();
                        let pos = norm_index(&i, items.len())?;
                        items[pos] = value;
                    }
                    Value::Dict(pairs) => {
                        let mut pairs = pairs.borrow_mut();
                        match pairs.iter_mut().find(|(k, _)| k.py_eq(&i)) {
                            Some(slot) => slot.1 = value,
                            None => pairs.push((i, value)),
                        }
                    }
                    other => {
                        return exc(
                            "TypeError",
                            format!("'{}' does not support item assignment", other.type_name()),
                        )
                    }
                }
            }
        }
        Ok(())
    }

    fn lookup(&self, name: &str, scope: &Scope) -> R<Value> {
        if let Some(v) = scope.as_ref().and_then(|vars| vars.get(name)) {
            return Ok(v.clone());
        }
        if let Some(v) = self.globals.get(name) {
            return Ok(v.clone());
        }
        if let Some(b) = BUILTINS.iter().find(|b| **b == name) {
            return Ok(Value::Builtin(b));
        }
        exc("NameError", format!("name '{name}' is not defined"))
    }

    pub fn eval(&mut self, e: &Expr, scope: &mut Scope) -> R<Value> {
        Ok(match e {
            Expr::Int(i) => Value::Int(*i),
            Expr::Float(x) => Value::Float(*x),
            Expr::Str(s) => Value::Str(s.clone()),
            Expr::Bool(b) => Value::Bool(*b),
            Expr::None => Value::None,
            Expr::Name(n) => self.lookup(n, scope)?,
            Expr::Tuple(items) => Value::tuple(self.eval_all(items, scope)?),
            Expr::List(items) => Value::list(self.eval_all(items, scope)?),
            Expr::Dict(pairs) => {
                let mut out: Vec<(Value, Value)> = Vec::new();
                for (k, v) in pairs {
                    let k = self.eval(k, scope)?;
                    let v = self.eval(v, scope)?;
                    match out.iter_mut().find(|(k2, _)| k2.py_eq(&k)) {
                        Some(slot) => slot.1 = v,
                        None => out.push((k, v)),
                    }
                }
                Value::Dict(Rc::new(std::cell::RefCell::new(out)))
            }
            Expr::ListComp {
                elt,
                target,
                iter,
                cond,
            } => {
                let items = iterate(&self.eval(iter, scope)?)?;
                let saved = scope.clone();
                let mut local: Scope = Some(scope.clone().unwrap_or_default());
                let mut out = Vec::new();
                for item in items {
                    self.tick()?;
                    self.assign(target, item, &mut local)?;
                    if let Some(c) = cond {
                        if !self.eval(c, &mut local)?.truthy() {
                            continue;
                        }
                    }
                    out.push(self.eval(elt, &mut local)?);
                }
                *scope = saved;
                Value::list(out)
            }
            Expr::Unary(op, inner) => {
                let v = self.eval(inner, scope)?;
                match (*op, &v) {
                    ("-", Value::Float(x)) => Value::Float(-x),
                    ("-", _) => match v.as_int() {
                        Some(i) => Value::Int(i.checked_neg().ok_or_else(overflow)?),
                        None => {
                            return exc(
                                "TypeError",
                                format!("bad operand type for unary -: '{}'", v.type_name()),
                            )
                        }
                    },
                    ("+", Value::Float(_)) => v.clone(),
                    ("+", _) | ("~", _) => match v.as_int() {
                        Some(i) => Value::Int(if *op == "~" { !i } else { i }),
                        None => return exc("TypeError", "bad operand type"),
                    },
                    _ => unreachable!(),
                }
            }
            Expr::Binary(op, a, b) => {
                let a = self.eval(a, scope)?;
                let b = self.eval(b, scope)?;
                binary(op, &a, &b)?
            }
            Expr::Compare(first, rest) => {
                let mut left = self.eval(first, scope)?;
                for (op, right) in rest {
                    let right = self.eval(right, scope)?;
                    if !compare(op, &left, &right)? {
                        return Ok(Value::Bool(false));
                    }
                    left = right;
                }
                Value::Bool(true)
            }
            Expr::And(a, b) => {
                let a = self.eval(a, scope)?;
                if !a.truthy() {
                    a
                } else {
                    self.eval(b, scope)?
                }
            }
            Expr::Or(a, b) => {
                let a = self.eval(a, scope)?;
                if a.truthy() {
                    a
                } else {
                    self.eval(b, scope)?
                }
            }
            Expr::Not(a) => Value::Bool(!self.eval(a, scope)?.truthy()),
            Expr::IfExp(cond, body, orelse) => {
                if self.eval(cond, scope)?.truthy() {
                    self.eval(body, scope)?
                } else {
                    self.eval(orelse, scope)?
                }
            }
            Expr::Call(f, args) => {
                let f = self.eval(f, scope)?;
                let args = self.eval_all(args, scope)?;
                self.call(&f, args)?
            }
            Expr::Attr(obj, name) => {
                let o = self.eval(obj, scope)?;
                Value::Method(Box::new(o), name.clone())
            }
            Expr::Index(obj, idx) => {
                let o = self.eval(obj, scope)?;
                if let Expr::Slice(lo, hi, step) = &**idx {
                    let mut bound = |b: &Option<Box<Expr>>, this: &mut Self| -> R<Option<i64>> {
                        match b {
                            None => Ok(None),
                            Some(e) => match this.eval(e, scope)? {
                                Value::None => Ok(None),
                                v => v.as_int().map(Some).ok_or_else(|| Exc {
                                    kind: "TypeError".into(),
                                    msg: "slice indices must be integers".into(),
                                }),
                            },
                        }
                    };
                    let lo = bound(lo, self)?;
                    let hi = bound(hi, self)?;
                    let step = bound(step, self)?;
                    slice(&o, lo, hi, step)?
                } else {
                    let i = self.eval(idx, scope)?;
                    index(&o, &i)?
                }
            }
            Expr::Slice(..) => return exc("SyntaxError", "slice outside subscript"),
        })
    }

    fn eval_all(&mut self, items: &[Expr], scope: &mut Scope) -> R<Vec<Value>> {
        items.iter().map(|e| self.eval(e, scope)).collect()
    }

    fn call(&mut self, f: &Value, args: Vec<Value>) -> R<Value> {
        match f {
            Value::Func(def) => self.call_user(def, args),
            Value::Builtin(name) => self.call_builtin(name, args),
            Value::Method(obj, name) => call_method(obj, name, args),
            other => exc("TypeError", format!("'{}' object is not callable", other.type_name())),
        }
    }

    fn call_user(&mut self, def: &Rc<FuncDef>, args: Vec<Value>) -> R<Value> {
        if args.len() > def.params.len() {
            return exc(
                "TypeError",
                format!("{}() takes {} arguments", def.name, def.params.len()),
            );
        }
        let mut vars = HashMap::new();
        let supplied = args.len();
        for (i, (name, default)) in def.params.iter().enumerate() {
            let v = if i < supplied {
                args[i].clone()
            } else if let Some(d) = default {
                let mut none: Scope = None;
                self.eval(d, &mut none)?
            } else {
                return exc("TypeError", format!("{}() missing argument '{name}'", def.name));
            };
            vars.insert(name.clone(), v);
        }
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            self.depth -= 1;
            return exc("RecursionError", "maximum recursion depth exceeded");
        }
        let mut scope: Scope = Some(vars);
        let flow = self.exec_block(&def.body, &mut scope);
        self.depth -= 1;
        Ok(match flow? {
            Flow::Return(v) => v,
            _ => Value::None,
        })
    }

    fn call_builtin(&mut self, name: &str, args: Vec<Value>) -> R<Value> {
        let arg = |i: usize| -> R<&Value> {
            args.get(i).ok_or_else(|| Exc {
                kind: "TypeError".into(),
                msg: format!("{name}() missing argument"),
            })
        };
        Ok(match name {
            "len" => Value::Int(match arg(0)? {
                Value::Str(s) => s.chars().count(),
                Value::Tuple(t) => t.len(),
                Value::List(l) => l.borrow().len(),
                Value::Dict(d) => d.borrow().len(),
                other => {
                    return exc(
                        "TypeError",
                        format!("object of type '{}' has no len()", other.type_name()),
                    )
                }
            } as i64),
            "abs" => match arg(0)? {
                Value::Float(x) => Value::Float(x.abs()),
                v => Value::Int(v.as_int().ok_or_else(|| type_err("bad operand for abs()"))?.abs()),
            },
            "min" | "max" => {
                let items = if args.len() == 1 {
                    iterate(&args[0])?
                } else {
                    args.clone()
                };
                let mut best = items.first().cloned().ok_or_else(|| Exc {
                    kind: "ValueError".into(),
                    msg: format!("{name}() arg is an empty sequence"),
                })?;
                for v in &items[1..] {
                    let better = if name == "min" {
                        compare("<", v, &best)?
                    } else {
                        compare(">", v, &best)?
                    };
                    if better {
                        best = v.clone();
                    }
                }
                best
            }
            "sum" => {
                let mut acc = args.get(1).cloned().unwrap_or(Value::Int(0));
                for v in iterate(arg(0)?)? {
                    acc = binary("+", &acc, &v)?;
                }
                acc
            }
            "sorted" => {
                let mut items = iterate(arg(0)?)?;
                sort_values(&mut items)?;
                Value::list(items)
            }
            "reversed" => {
                let mut items = iterate(arg(0)?)?;
                items.reverse();
                Value::list(items)
            }
            "str" => Value::Str(args.first().map(Value::to_str).unwrap_or_default()),
            "int" => match args.first() {
                None => Value::Int(0),
                Some(Value::Float(x)) => Value::Int(x.trunc() as i64),
                Some(Value::Str(s)) => Value::Int(s.trim().parse().map_err(|_| Exc {
                    kind: "ValueError".into(),
                    msg: format!("invalid literal for int(): '{s}'"),
                })?),
                Some(v) => Value::Int(v.as_int().ok_or_else(|| type_err("int() argument"))?),
            },
            "float" => match args.first() {
                None => Value::Float(0.0),
                Some(Value::Str(s)) => Value::Float(s.trim().parse().map_err(|_| Exc {
                    kind: "ValueError".into(),
                    msg: format!("could not convert string to float: '{s}'"),
                })?),
                Some(v) => Value::Float(v.as_f64().ok_or_else(|| type_err("float() argument"))?),
            },
            "bool" => Value::Bool(args.first().is_some_and(Value::truthy)),
            "list" => Value::list(match args.first() {
                Some(v) => iterate(v)?,
                None => vec![],
            }),
            "tuple" => Value::tuple(match args.first() {
                Some(v) => iterate(v)?,
                None => vec![],
            }),
            "range" => {
                let ints: Vec<i64> = args
                    .iter()
                    .map(|a| a.as_int().ok_or_else(|| type_err("range() integer argument expected")))
                    .collect::<R<_>>()?;
                let (start, stop, step) = match ints.as_slice() {
                    [stop] => (0, *stop, 1),
                    [start, stop] => (*start, *stop, 1),
                    [start, stop, step] => (*start, *stop, *step),
                    _ => return exc("TypeError", "range expected 1 to 3 arguments"),
                };
                if step == 0 {
                    return exc("ValueError", "range() arg 3 must not be zero");
                }
                let mut out = Vec::new();
                let mut i = start;
                while (step > 0 && i < stop) || (step < 0 && i > stop) {
                    if out.len() >= MAX_LEN {
                        return exc("MemoryError", "");
                    }
                    out.push(Value::Int(i));
                    i += step;
                }
                Value::list(out)
            }
            "print" => Value::None,
            "enumerate" => Value::list(
                iterate(arg(0)?)?
                    .into_iter()
                    .enumerate()
                    .map(|(i, v)| Value::tuple(vec![Value::Int(i as i64), v]))
                    .collect(),
            ),
            "zip" => {
                let cols: Vec<Vec<Value>> = args.iter().map(iterate).collect::<R<_>>()?;
                let n = cols.iter().map(Vec::len).min().unwrap_or(0);
                Value::list(
                    (0..n)
                        .map(|i| Value::tuple(cols.iter().map(|c| c[i].clone()).collect()))
                        .collect(),
                )
            }
            "any" => Value::Bool(iterate(arg(0)?)?.iter().any(Value::truthy)),
            "all" => Value::Bool(iterate(arg(0)?)?.iter().all(Value::truthy)),
            "round" => {
                let x = arg(0)?.as_f64().ok_or_else(|| type_err("round() argument"))?;
                match args.get(1) {
                    None => Value::Int(round_half_even(x) as i64),
                    Some(d) => {
                        let p = 10f64.powi(d.as_int().unwrap_or(0) as i32);
                        Value::Float(round_half_even(x * p) / p)
                    }
                }
            }
            "ord" => match arg(0)? {
                Value::Str(s) if s.chars().count() == 1 => Value::Int(s.chars().next().unwrap() as i64),
                _ => return exc("TypeError", "ord() expected a character"),
            },
            "chr" => Value::Str(
                char::from_u32(arg(0)?.as_int().unwrap_or(-1) as u32)
                    .ok_or_else(|| Exc {
                        kind: "ValueError".into(),
                        msg: "chr() arg not in range".into(),
                    })?
                    .to_string(),
            ),
            "isinstance" => {
                let v = arg(0)?;
                let names: Vec<&str> = match arg(1)? {
                    Value::Builtin(n) => vec![*n],
                    Value::Tuple(ts) => ts
                        .iter()
                        .filter_map(|t| if let Value::Builtin(n) = t { Some(*n) } else { None })
                        .collect(),
                    _ => return exc("TypeError", "isinstance() arg 2 must be a type"),
                };
                Value::Bool(
                    names
                        .iter()
                        .any(|n| *n == v.type_name() || (*n == "int" && v.type_name() == "bool")),
                )
            }
            other => return exc("NameError", format!("name '{other}' is not defined")),
        })
    }
}

fn type_err(msg: &str) -> Exc {
    Exc {
        kind: "TypeError".into(),
        msg: msg.into(),
    }
}

fn overflow() -> Exc {
    Exc {
        kind: "OverflowError".into(),
        msg: "integer overflow".into(),
    }
}

fn round_half_even(x: f64) -> f64 {
    let r = x.round();
    if (x - x.trunc()).abs() == 0.5 && r % 2.0 != 0.0 {
        r - x.signum()
    } else {
        r
    }
}

fn iterate(v: &Value) -> R<Vec<Value>> {
    Ok(match v {
        Value::Str(s) => s.chars().map(|c| Value::Str(c.to_string())).collect(),
        Value::Tuple(t) => t.to_vec(),
        Value::List(l) => l.borrow().clone(),
        Value::Dict(d) => d.borrow().iter().map(|(k, _)| k.clone()).collect(),
        other => return exc("TypeError", format!("'{}' object is not iterable", other.type_name())),
    })
}

fn sort_values(items: &mut [Value]) -> R<()> {
    let mut err = None;
    items.sort_by(|a, b| {
        if compare("<", a, b).unwrap_or_else(|e| {
            err = Some(e);
            false
        }) {
            std::cmp::Ordering::Less
        } else if compare("<", b, a).unwrap_or(false) {
            std::cmp::Ordering::Greater
        } else {
            std::cmp::Ordering::Equal
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn norm_index(i: &Value, len: usize) -> R<usize> {
    let i = i.as_int().ok_or_else(|| type_err("indices must be integers"))?;
    let pos = if i < 0 { i + len as i64 } else { i };
    if pos < 0 || pos >= len as i64 {
        return exc("IndexError", "index out of range");
    }
    Ok(pos as usize)
}

fn index(o: &Value, i: &Value) -> R<Value> {
    Ok(match o {
        Value::List(items) => {
            let items = items.borrow();
            items[norm_index(i, items.len())?].clone()
        }
        Value::Tuple(items) => items[norm_index(i, items.len())?].clone(),
        Value::Str(s) => {
            let chars: Vec<char> = s.chars().collect();
            Value::Str(chars[norm_index(i, chars.len())?].to_string())
        }
        Value::Dict(pairs) => pairs
            .borrow()
            .iter()
            .find(|(k, _)| k.py_eq(i))
            .map(|(_, v)| v.clone())
            .ok_or_else(|| Exc {
                kind: "KeyError".into(),
                msg: i.repr(),
            })?,
        other => {
            return exc(
                "TypeError",
                format!("'{}' object is not subscriptable", other.type_name()),
            )
        }
    })
}

fn slice(o: &Value, lo: Option<i64>, hi: Option<i64>, step: Option<i64>) -> R<Value> {
    let step = step.unwrap_or(1);
    if step == 0 {
        return exc("ValueError", "slice step cannot be zero");
    }
    let pick = |len: usize| -> Vec<usize> {
        let len = len as i64;
        let clamp = |v: i64, lo_b: i64, hi_b: i64| v.clamp(lo_b, hi_b);
        let norm = |v: i64| if v < 0 { v + len } else { v };
        let mut out = Vec::new();
        if step > 0 {
            let start = clamp(lo.map(norm).unwrap_or(0), 0, len);
            let stop = clamp(hi.map(norm).unwrap_or(len), 0, len);
            let mut i = start;
            while i < stop {
                out.push(i as usize);
                i += step;
            }
        } else {
            let start = clamp(lo.map(norm).unwrap_or(len - 1), -1, len - 1);
            let stop = clamp(hi.map(norm).unwrap_or(-1), -1, len - 1);
            let mut i = start;
            while i > stop {
                out.push(i as usize);
                i += step;
            }
        }
        out
    };
    Ok(match o {
        Value::List(items) => {
            let items = items.borrow();
            Value::list(pick(items.len()).into_iter().map(|i| items[i].clone()).collect())
        }
        Value::Tuple(items) => Value::tuple(pick(items.len()).into_iter().map(|i| items[i].clone()).collect()),
        Value::Str(s) => {
            let chars: Vec<char> = s.chars().collect();
            Value::Str(pick(chars.len()).into_iter().map(|i| chars[i]).collect())
        }
        other => {
            return exc(
                "TypeError",
                format!("'{}' object is not subscriptable", other.type_name()),
            )
        }
    })
}

fn floor_div(a: i64, b: i64) -> R<i64> {
    if b == 0 {
        return exc("ZeroDivisionError", "integer division or modulo by zero");
    }
    let q = a.checked_div(b).ok_or_else(overflow)?;
    Ok(if (a % b != 0) && ((a < 0) != (b < 0)) { q - 1 } else { q })
}

fn binary(op: &str, a: &Value, b: &Value) -> R<Value> {
    use Value::*;
    if let (Some(x), Some(y)) = (a.as_int(), b.as_int()) {
        return Ok(match op {
            "+" => Int(x.checked_add(y).ok_or_else(overflow)?),
            "-" => Int(x.checked_sub(y).ok_or_else(overflow)?),
            "*" => Int(x.checked_mul(y).ok_or_else(overflow)?),
            "/" => {
                if y == 0 {
                    return exc("ZeroDivisionError", "division by zero");
                }
                Float(x as f64 / y as f64)
            }
            "//" => Int(floor_div(x, y)?),
            "%" => Int(x - floor_div(x, y)? * y),
            "**" => {
                if y < 0 {
                    Float((x as f64).powf(y as f64))
                } else {
                    Int(x
                        .checked_pow(u32::try_from(y).map_err(|_| overflow())?)
                        .ok_or_else(overflow)?)
                }
            }
            "|" => Int(x | y),
            "&" => Int(x & y),
            "^" => Int(x ^ y),
            _ => return exc("TypeError", format!("unsupported operator {op}")),
        });
    }
    if let (Some(x), Some(y)) = (a.as_f64(), b.as_f64()) {
        return Ok(match op {
            "+" => Float(x + y),
            "-" => Float(x - y),
            "*" => Float(x * y),
            "/" | "//" | "%" if y == 0.0 => return exc("ZeroDivisionError", "float division by zero"),
            "/" => Float(x / y),
            "//" => Float((x / y).floor()),
            "%" => Float(x - (x / y).floor() * y),
            "**" => Float(x.powf(y)),
            _ => return exc("TypeError", format!("unsupported operand for {op}: float")),
        });
    }
    Ok(match (op, a, b) {
        ("+", Str(x), Str(y)) => Str(format!("{x}{y}")),
        ("+", List(x), List(y)) => Value::list(x.borrow().iter().chain(y.borrow().iter()).cloned().collect()),
        ("+", Tuple(x), Tuple(y)) => Value::tuple(x.iter().chain(y.iter()).cloned().collect()),
        ("*", Str(s), n) | ("*", n, Str(s)) if n.as_int().is_some() => {
            let k = n.as_int().unwrap().max(0) as usize;
            if s.len().saturating_mul(k) > MAX_LEN {
                return exc("MemoryError", "");
            }
            Str(s.repeat(k))
        }
        ("*", List(l), n) | ("*", n, List(l)) if n.as_int().is_some() => {
            let k = n.as_int().unwrap().max(0) as usize;
            let items = l.borrow();
            if items.len().saturating_mul(k) > MAX_LEN {
                return exc("MemoryError", "");
            }
            Value::list(items.iter().cloned().cycle().take(items.len() * k).collect())
        }
        _ => {
            return exc(
                "TypeError",
                format!(
                    "unsupported operand type(s) for {op}: '{}' and '{}'",
                    a.type_name(),
                    b.type_name()
                ),
            )
        }
    })
}

fn compare(op: &str, a: &Value, b: &Value) -> R<bool> {
    Ok(match op {
        "==" => a.py_eq(b),
        "!=" => !a.py_eq(b),
        "is" => a.py_eq(b) && a.type_name() == b.type_name(),
        "is not" => !(a.py_eq(b) && a.type_name() == b.type_name()),
        "in" | "not in" => {
            let found = match b {
                Value::Str(hay) => match a {
                    Value::Str(needle) => hay.contains(needle.as_str()),
                    _ => return exc("TypeError", "'in <string>' requires string as left operand"),
                },
                other => iterate(other)?.iter().any(|v| v.py_eq(a)),
            };
            found == (op == "in")
        }
        _ => {
            let ord = order(a, b)?;
            match op {
                "<" => ord.is_lt(),
                "<=" => ord.is_le(),
                ">" => ord.is_gt(),
                ">=" => ord.is_ge(),
                _ => unreachable!(),
            }
        }
    })
}

fn order(a: &Value, b: &Value) -> R<std::cmp::Ordering> {
    use std::cmp::Ordering;
    if let (Some(x), Some(y)) = (a.as_f64(), b.as_f64()) {
        return Ok(x.partial_cmp(&y).unwrap_or(Ordering::Equal));
    }
    let seq = |x: &[Value], y: &[Value]| -> R<Ordering> {
        for (p, q) in x.iter().zip(y) {
            if !p.py_eq(q) {
                return order(p, q);
            }
        }
        Ok(x.len().cmp(&y.len()))
    };
    match (a, b) {
        (Value::Str(x), Value::Str(y)) => Ok(x.cmp(y)),
        (Value::Tuple(x), Value::Tuple(y)) => seq(x, y),
        (Value::List(x), Value::List(y)) => seq(&x.borrow(), &y.borrow()),
        _ => exc(
            "TypeError",
            format!(
                "'<' not supported between instances of '{}' and '{}'",
                a.type_name(),
                b.type_name()
            ),
        ),
    }
}

fn call_method(obj: &Value, name: &str, args: Vec<Value>) -> R<Value> {
    let str_arg = |i: usize| -> R<String> {
        match args.get(i) {
            Some(Value::Str(s)) => Ok(s.clone()),
            _ => exc("TypeError", format!("{name}() expects a string argument")),
        }
    };
    Ok(match obj {
        Value::Str(s) => match name {
            "upper" => Value::Str(s.to_uppercase()),
            "lower" => Value::Str(s.to_lowercase()),
            "strip" => Value::Str(s.trim().to_string()),
            "lstrip" => Value::Str(s.trim_start().to_string()),
            "rstrip" => Value::Str(s.trim_end().to_string()),
            "split" => Value::list(match args.first() {
                None => s.split_whitespace().map(|p| Value::Str(p.into())).collect(),
                Some(_) => {
                    let sep = str_arg(0)?;
                    if sep.is_empty() {
                        return exc("ValueError", "empty separator");
                    }
                    s.split(sep.as_str()).map(|p| Value::Str(p.into())).collect()
                }
            }),
            "join" => {
                let parts = iterate(args.first().ok_or_else(|| type_err("join() takes one argument"))?)?;
                let mut out = Vec::new();
                for p in parts {
                    match p {
                        Value::Str(p) => out.push(p),
                        other => {
                            return exc(
                                "TypeError",
                                format!("sequence item: expected str, {} found", other.type_name()),
                            )
                        }
                    }
                }
                Value::Str(out.join(s))
            }
            "startswith" => Value::Bool(s.starts_with(str_arg(0)?.as_str())),
            "endswith" => Value::Bool(s.ends_with(str_arg(0)?.as_str())),
            "replace" => Value::Str(s.replace(str_arg(0)?.as_str(), str_arg(1)?.as_str())),
            "count" => Value::Int(s.matches(str_arg(0)?.as_str()).count() as i64),
            "find" => Value::Int(
                s.find(str_arg(0)?.as_str())
                    .map(|b| s[..b].chars().count() as i64)
                    .unwrap_or(-1),
            ),
            "isdigit" => Value::Bool(!s.is_empty() && s.chars().all(|c| c.is_ascii_digit())),
            "isalpha" => Value::Bool(!s.is_empty() && s.chars().all(char::is_alphabetic)),
            _ => return exc("AttributeError", format!("'str' object has no attribute '{name}'")),
        },
        Value::List(items) => match name {
            "append" => {
                items.borrow_mut().push(
                    args.into_iter()
                        .next()
                        .ok_or_else(|| type_err("append() takes one argument"))?,
                );
                Value::None
            }
            "extend" => {
                let extra = iterate(args.first().ok_or_else(|| type_err("extend() takes one argument"))?)?;
                items.borrow_mut().extend(extra);
                Value::None
            }
            "insert" => {
                let mut v = items.borrow_mut();
                let at = args.first().and_then(Value::as_int).unwrap_or(0);
                let at = if at < 0 {
                    (at + v.len() as i64).max(0)
                } else {
                    at.min(v.len() as i64)
                } as usize;
                v.insert(at, args.get(1).cloned().unwrap_or(Value::None));
                Value::None
            }
            "pop" => {
                let mut v = items.borrow_mut();
                if v.is_empty() {
                    return exc("IndexError", "pop from empty list");
                }
                let at = match args.first() {
                    Some(i) => norm_index(i, v.len())?,
                    None => v.len() - 1,
                };
                v.remove(at)
            }
            "index" => {
                let target = args.first().ok_or_else(|| type_err("index() takes one argument"))?;
                let pos = items.borrow().iter().position(|v| v.py_eq(target));
                Value::Int(pos.ok_or_else(|| Exc {
                    kind: "ValueError".into(),
                    msg: "value not in list".into(),
                })? as i64)
            }
            "count" => {
                let target = args.first().ok_or_else(|| type_err("count() takes one argument"))?;
                Value::Int(items.borrow().iter().filter(|v| v.py_eq(target)).count() as i64)
            }
            "sort" => {
                sort_values(&mut items.borrow_mut())?;
                Value::None
            }
            "reverse" => {
                items.borrow_mut().reverse();
                Value::None
            }
            _ => return exc("AttributeError", format!("'list' object has no attribute '{name}'")),
        },
        Value::Dict(pairs) => match name {
            "get" => {
                let key = args.first().ok_or_else(|| type_err("get() takes a key"))?;
                pairs
                    .borrow()
                    .iter()
                    .find(|(k, _)| k.py_eq(key))
                    .map(|(_, v)| v.clone())
                    .unwrap_or_else(|| args.get(1).cloned().unwrap_or(Value::None))
            }
            "keys" => Value::list(pairs.borrow().iter().map(|(k, _)| k.clone()).collect()),
            "values" => Value::list(pairs.borrow().iter().map(|(_, v)| v.clone()).collect()),
            "items" => Value::list(
                pairs
                    .borrow()
                    .iter()
                    .map(|(k, v)| Value::tuple(vec![k.clone(), v.clone()]))
                    .collect(),
            ),
            _ => return exc("AttributeError", format!("'dict' object has no attribute '{name}'")),
        },
        other => {
            return exc(
                "AttributeError",
                format!("'{}' object has no attribute '{name}'", other.type_name()),
            )
        }
    })
}
