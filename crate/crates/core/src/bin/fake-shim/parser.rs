//! Recursive-descent parser producing a small statement/expression tree.

use std::rc::Rc;

use crate::lexer::{Tok, Token};

#[derive(Debug, Clone)]
pub enum Expr {
    Int(i64),
    Float(f64),
    Str(String),
    Bool(bool),
    None,
    Name(String),
    Tuple(Vec<Expr>),
    List(Vec<Expr>),
    Dict(Vec<(Expr, Expr)>),
    ListComp {
        elt: Box<Expr>,
        target: Target,
        iter: Box<Expr>,
        cond: Option<Box<Expr>>,
    },
    Unary(&'static str, Box<Expr>),
    Binary(&'static str, Box<Expr>, Box<Expr>),
    Compare(Box<Expr>, Vec<(String, Expr)>),
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
    Not(Box<Expr>),
    IfExp(Box<Expr>, Box<Expr>, Box<Expr>),
    Call(Box<Expr>, Vec<Expr>),
    Attr(Box<Expr>, String),
    Index(Box<Expr>, Box<Expr>),
    Slice(Option<Box<Expr>>, Option<Box<Expr>>, Option<Box<Expr>>),
}

impl Expr {
    /// True when the expression is built only from constants and containers.
    pub fn is_literal(&self) -> bool {
        match self {
            Expr::Int(_) | Expr::Float(_) | Expr::Str(_) | Expr::Bool(_) | Expr::None => true,
            Expr::Unary(op, inner) if *op == "-" || *op == "+" => {
                matches!(**inner, Expr::Int(_) | Expr::Float(_))
            }
            Expr::Tuple(items) | Expr::List(items) => items.iter().all(Expr::is_literal),
            Expr::Dict(pairs) => pairs.iter().all(|(k, v)| k.is_literal() && v.is_literal()),
            _ => false,
        }
    }
}

#[derive(Debug, Clone)]
pub enum Target {
    Name(String),
    Tuple(Vec<Target>),
    Index(Box<Expr>, Box<Expr>),
}

#[derive(Debug)]
pub struct FuncDef {
    pub name: String,
    pub params: Vec<(String, Option<Expr>)>,
    pub body: Vec<Stmt>,
}

#[derive(Debug, Clone)]
pub enum StmtKind {
    Expr(Expr),
    Assign(Vec<Target>, Expr),
    AugAssign(Target, &'static str, Expr),
    Return(Option<Expr>),
    If(Vec<(Expr, Vec<Stmt>)>, Option<Vec<Stmt>>),
    While(Expr, Vec<Stmt>),
    For(Target, Expr, Vec<Stmt>),
    Def(Rc<FuncDef>),
    Pass,
    Break,
    Continue,
    Raise(Option<Expr>),
    Assert(Expr, Option<Expr>),
    Import,
}

#[derive(Debug, Clone)]
pub struct Stmt {
    pub line: u32,
    pub kind: StmtKind,
}

pub struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

type PResult<T> = Result<T, String>;

impl Parser {
    pub fn new(toks: Vec<Token>) -> Self {
        Parser { toks, pos: 0 }
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].tok
    }

    fn line(&self) -> u32 {
        self.toks[self.pos].line
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn is_op(&self, op: &str) -> bool {
        matches!(self.peek(), Tok::Op(o) if *o == op)
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Name(n) if n == kw)
    }

    fn eat_op(&mut self, op: &str) -> bool {
        if self.is_op(op) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_op(&mut self, op: &str) -> PResult<()> {
        if self.eat_op(op) {
            Ok(())
        } else {
            Err(self.error(&format!("expected `{op}`")))
        }
    }

    fn error(&self, what: &str) -> String {
        format!("line {}: {what}, found `{}`", self.line(), self.peek())
    }

    fn name(&mut self) -> PResult<String> {
        match self.bump() {
            Tok::Name(n) if !is_keyword(&n) => Ok(n),
            other => Err(format!("line {}: expected a name, found `{other}`", self.line())),
        }
    }

    pub fn parse_module(&mut self) -> PResult<Vec<Stmt>> {
        let mut body = Vec::new();
        while *self.peek() != Tok::Eof {
            if *self.peek() == Tok::Newline {
                self.bump();
                continue;
            }
            if *self.peek() == Tok::Indent {
                return Err(self.error("unexpected indent"));
            }
            body.extend(self.statement()?);
        }
        Ok(body)
    }

    /// A complete expression followed by end of input.
    pub fn parse_lone_expr(&mut self) -> PResult<Expr> {
        let e = self.expr_list()?;
        while *self.peek() == Tok::Newline {
            self.bump();
        }
        if *self.peek() != Tok::Eof {
            return Err(self.error("trailing input"));
        }
        Ok(e)
    }

    fn block(&mut self) -> PResult<Vec<Stmt>> {
        self.expect_op(":")?;
        if *self.peek() != Tok::Newline {
            return self.simple_line();
        }
        self.bump();
        if *self.peek() != Tok::Indent {
            return Err(self.error("expected an indented block"));
        }
        self.bump();
        let mut body = Vec::new();
        while *self.peek() != Tok::Dedent && *self.peek() != Tok::Eof {
            if *self.peek() == Tok::Newline {
                self.bump();
                continue;
            }
            body.extend(self.statement()?);
        }
        if *self.peek() == Tok::Dedent {
            self.bump();
        }
        Ok(body)
    }

    fn statement(&mut self) -> PResult<Vec<Stmt>> {
        let line = self.line();
        let kind = if self.eat_kw("def") {
            let name = self.name()?;
            self.expect_op("(")?;
            let mut params = Vec::new();
            while !self.is_op(")") {
                let p = self.name()?;
                if self.eat_op(":") {
                    self.skip_annotation(&[",", ")", "="])?;
                }
                let default = if self.eat_op("=") { Some(self.expr()?) } else { None };
                params.push((p, default));
                if !self.eat_op(",") {
                    break;
                }
            }
            self.expect_op(")")?;
            if self.eat_op("->") {
                self.skip_annotation(&[":"])?;
            }
            let body = self.block()?;
            StmtKind::Def(Rc::new(FuncDef { name, params, body }))
        } else if self.eat_kw("if") {
            let mut arms = vec![(self.expr()?, self.block()?)];
            let mut orelse = None;
            loop {
                if self.eat_kw("elif") {
                    arms.push((self.expr()?, self.block()?));
                } else if self.eat_kw("else") {
                    orelse = Some(self.block()?);
                    break;
                } else {
                    break;
                }
            }
            StmtKind::If(arms, orelse)
        } else if self.eat_kw("while") {
            let cond = self.expr()?;
            StmtKind::While(cond, self.block()?)
        } else if self.eat_kw("for") {
            let target = self.target_list()?;
            if !self.eat_kw("in") {
                return Err(self.error("expected `in`"));
            }
            let iter = self.expr_list()?;
            StmtKind::For(target, iter, self.block()?)
        } else if self.is_kw("class") || self.is_kw("try") || self.is_kw("with") || self.is_kw("lambda") {
            return Err(self.error("unsupported statement"));
        } else {
            return self.simple_line();
        };
        Ok(vec![Stmt { line, kind }])
    }

    fn skip_annotation(&mut self, stops: &[&str]) -> PResult<()> {
        let mut depth = 0usize;
        loop {
            match self.peek() {
                Tok::Op(o) if depth == 0 && stops.contains(o) => return Ok(()),
                Tok::Op("(") | Tok::Op("[") | Tok::Op("{") => depth += 1,
                Tok::Op(")") | Tok::Op("]") | Tok::Op("}") => {
                    if depth == 0 {
                        return Ok(());
                    }
                    depth -= 1
                }
                Tok::Newline | Tok::Eof => return Err(self.error("unterminated annotation")),
                _ => {}
            }
            self.bump();
        }
    }

    /// Simple statements separated by `;`, ending at NEWLINE.
    fn simple_line(&mut self) -> PResult<Vec<Stmt>> {
        let mut out = Vec::new();
        loop {
            let line = self.line();
            let kind = self.simple()?;
            out.push(Stmt { line, kind });
            if !self.eat_op(";") || *self.peek() == Tok::Newline {
                break;
            }
        }
        match self.peek() {
            Tok::Newline => {
                self.bump();
            }
            Tok::Eof | Tok::Dedent => {}
            _ => return Err(self.error("expected end of statement")),
        }
        Ok(out)
    }

    fn simple(&mut self) -> PResult<StmtKind> {
        if self.eat_kw("pass") {
            return Ok(StmtKind::Pass);
        }
        if self.eat_kw("break") {
            return Ok(StmtKind::Break);
        }
        if self.eat_kw("continue") {
            return Ok(StmtKind::Continue);
        }
        if self.eat_kw("return") {
            if matches!(self.peek(), Tok::Newline | Tok::Eof | Tok::Dedent) || self.is_op(";") {
                return Ok(StmtKind::Return(None));
            }
            return Ok(StmtKind::Return(Some(self.expr_list()?)));
        }
        if self.eat_kw("raise") {
            if matches!(self.peek(), Tok::Newline | Tok::Eof | Tok::Dedent) {
                return Ok(StmtKind::Raise(None));
            }
            return Ok(StmtKind::Raise(Some(self.expr()?)));
        }
        if self.eat_kw("assert") {
            let cond = self.expr()?;
            let msg = if self.eat_op(",") { Some(self.expr()?) } else { None };
            return Ok(StmtKind::Assert(cond, msg));
        }
        if self.is_kw("import") || self.is_kw("from") {
            while !matches!(self.peek(), Tok::Newline | Tok::Eof) {
                self.bump();
            }
            return Ok(StmtKind::Import);
        }
        if self.is_kw("global") || self.is_kw("nonlocal") || self.is_kw("del") || self.is_kw("yield") {
            return Err(self.error("unsupported statement"));
        }
        let first = self.expr_list()?;
        if let Tok::Op(op) = self.peek().clone() {
            if let Some(bin) = op
                .strip_suffix('=')
                .filter(|b| !b.is_empty() && !["=", "!", "<", ">"].contains(b))
            {
                let bin: &'static str = match bin {
                    "+" => "+",
                    "-" => "-",
                    "*" => "*",
                    "/" => "/",
                    "//" => "//",
                    "%" => "%",
                    "**" => "**",
                    _ => return Err(self.error("unsupported augmented assignment")),
                };
                self.bump();
                let value = self.expr_list()?;
                return Ok(StmtKind::AugAssign(to_target(first)?, bin, value));
            }
        }
        if self.is_op(":") {
            // annotated assignment
            self.bump();
            self.skip_annotation(&["="])?;
        }
        if self.is_op("=") {
            let mut targets = vec![to_target(first)?];
            let mut value;
            loop {
                self.expect_op("=")?;
                value = self.expr_list()?;
                if self.is_op("=") {
                    targets.push(to_target(value)?);
                } else {
                    break;
                }
            }
            return Ok(StmtKind::Assign(targets, value));
        }
        Ok(StmtKind::Expr(first))
    }

    fn target_list(&mut self) -> PResult<Target> {
        let mut items = vec![self.target_atom()?];
        let mut tuple = false;
        while self.eat_op(",") {
            tuple = true;
            if self.is_kw("in") {
                break;
            }
            items.push(self.target_atom()?);
        }
        Ok(if tuple {
            Target::Tuple(items)
        } else {
            items.pop().unwrap()
        })
    }

    fn target_atom(&mut self) -> PResult<Target> {
        if self.eat_op("(") {
            let t = self.target_list()?;
            self.expect_op(")")?;
            return Ok(t);
        }
        Ok(Target::Name(self.name()?))
    }

    /// Expression or bare tuple `a, b`.
    fn expr_list(&mut self) -> PResult<Expr> {
        let first = self.expr()?;
        if !self.is_op(",") {
            return Ok(first);
        }
        let mut items = vec![first];
        while self.eat_op(",") {
            if self.starts_expr() {
                items.push(self.expr()?);
            } else {
                break;
            }
        }
        Ok(Expr::Tuple(items))
    }

    fn starts_expr(&self) -> bool {
        match self.peek() {
            Tok::Name(n) => !matches!(n.as_str(), "in" | "if" | "else" | "for" | "and" | "or"),
            Tok::Int(_) | Tok::Float(_) | Tok::Str(_) => true,
            Tok::Op(o) => matches!(*o, "(" | "[" | "{" | "-" | "+" | "~"),
            _ => false,
        }
    }

    pub fn expr(&mut self) -> PResult<Expr> {
        let body = self.or_expr()?;
        if self.is_kw("if") && !self.in_comprehension_guard() {
            self.bump();
            let cond = self.or_expr()?;
            if !self.eat_kw("else") {
                return Err(self.error("expected `else`"));
            }
            let orelse = self.expr()?;
            return Ok(Expr::IfExp(Box::new(cond), Box::new(body), Box::new(orelse)));
        }
        Ok(body)
    }

    fn in_comprehension_guard(&self) -> bool {
        // `[x for x in xs if cond]`: the `if` has no matching `else` before the bracket closes.
        let mut depth = 0isize;
        let mut k = 1;
        loop {
            match self.peek_at(k) {
                Tok::Op("(") | Tok::Op("[") | Tok::Op("{") => depth += 1,
                Tok::Op(")") | Tok::Op("]") | Tok::Op("}") => {
                    if depth == 0 {
                        return true;
                    }
                    depth -= 1;
                }
                Tok::Name(n) if n == "else" && depth == 0 => return false,
                Tok::Newline | Tok::Eof => return true,
                _ => {}
            }
            k += 1;
        }
    }

    fn or_expr(&mut self) -> PResult<Expr> {
        let mut left = self.and_expr()?;
        while self.eat_kw("or") {
            left = Expr::Or(Box::new(left), Box::new(self.and_expr()?));
        }
        Ok(left)
    }

    fn and_expr(&mut self) -> PResult<Expr> {
        let mut left = self.not_expr()?;
        while self.eat_kw("and") {
            left = Expr::And(Box::new(left), Box::new(self.not_expr()?));
        }
        Ok(left)
    }

    fn not_expr(&mut self) -> PResult<Expr> {
        if self.eat_kw("not") {
            return Ok(Expr::Not(Box::new(self.not_expr()?)));
        }
        self.comparison()
    }

    fn comparison(&mut self) -> PResult<Expr> {
        let first = self.bitor()?;
        let mut rest = Vec::new();
        loop {
            let op = match self.peek() {
                Tok::Op(o) if matches!(*o, "==" | "!=" | "<" | "<=" | ">" | ">=") => {
                    let o = o.to_string();
                    self.bump();
                    o
                }
                Tok::Name(n) if n == "in" => {
                    self.bump();
                    "in".into()
                }
                Tok::Name(n) if n == "not" && matches!(self.peek_at(1), Tok::Name(m) if m == "in") => {
                    self.bump();
                    self.bump();
                    "not in".into()
                }
                Tok::Name(n) if n == "is" => {
                    self.bump();
                    if self.eat_kw("not") {
                        "is not".into()
                    } else {
                        "is".into()
                    }
                }
                _ => break,
            };
            rest.push((op, self.bitor()?));
        }
        Ok(if rest.is_empty() {
            first
        } else {
            Expr::Compare(Box::new(first), rest)
        })
    }

    fn bitor(&mut self) -> PResult<Expr> {
        let mut left = self.arith()?;
        while self.is_op("|") || self.is_op("&") || self.is_op("^") {
            let op = match self.bump() {
                Tok::Op(o) => o,
                _ => unreachable!(),
            };
            left = Expr::Binary(op, Box::new(left), Box::new(self.arith()?));
        }
        Ok(left)
    }

    fn arith(&mut self) -> PResult<Expr> {
        let mut left = self.term()?;
        while self.is_op("+") || self.is_op("-") {
            let op = if self.eat_op("+") {
                "+"
            } else {
                self.bump();
                "-"
            };
            left = Expr::Binary(op, Box::new(left), Box::new(self.term()?));
        }
        Ok(left)
    }

    fn term(&mut self) -> PResult<Expr> {
        let mut left = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Op(o) if matches!(*o, "*" | "/" | "//" | "%") => *o,
                _ => break,
            };
            self.bump();
            left = Expr::Binary(op, Box::new(left), Box::new(self.unary()?));
        }
        Ok(left)
    }

    fn unary(&mut self) -> PResult<Expr> {
        if self.eat_op("-") {
            return Ok(Expr::Unary("-", Box::new(self.unary()?)));
        }
        if self.eat_op("+") {
            return Ok(Expr::Unary("+", Box::new(self.unary()?)));
        }
        if self.eat_op("~") {
            return Ok(Expr::Unary("~", Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> PResult<Expr> {
        let base = self.postfix()?;
        if self.eat_op("**") {
            return Ok(Expr::Binary("**", Box::new(base), Box::new(self.unary()?)));
        }
        Ok(base)
    }

    fn postfix(&mut self) -> PResult<Expr> {
        let mut e = self.atom()?;
        loop {
            if self.eat_op("(") {
                let mut args = Vec::new();
                while !self.is_op(")") {
                    if matches!(self.peek_at(1), Tok::Op("=")) && matches!(self.peek(), Tok::Name(_)) {
                        return Err(self.error("keyword arguments unsupported"));
                    }
                    args.push(self.expr()?);
                    if !self.eat_op(",") {
                        break;
                    }
                }
                self.expect_op(")")?;
                e = Expr::Call(Box::new(e), args);
            } else if self.eat_op("[") {
                let index = self.subscript()?;
                self.expect_op("]")?;
                e = Expr::Index(Box::new(e), Box::new(index));
            } else if self.eat_op(".") {
                e = Expr::Attr(Box::new(e), self.name()?);
            } else {
                return Ok(e);
            }
        }
    }

    fn subscript(&mut self) -> PResult<Expr> {
        let opt = |p: &mut Parser| -> PResult<Option<Box<Expr>>> {
            if p.is_op(":") || p.is_op("]") {
                Ok(None)
            } else {
                Ok(Some(Box::new(p.expr()?)))
            }
        };
        let lo = opt(self)?;
        if !self.eat_op(":") {
            return lo.map(|b| *b).ok_or_else(|| self.error("empty subscript"));
        }
        let hi = opt(self)?;
        let step = if self.eat_op(":") { opt(self)? } else { None };
        Ok(Expr::Slice(lo, hi, step))
    }

    fn atom(&mut self) -> PResult<Expr> {
        let line = self.line();
        match self.bump() {
            Tok::Int(i) => Ok(Expr::Int(i)),
            Tok::Float(x) => Ok(Expr::Float(x)),
            Tok::Str(mut s) => {
                while let Tok::Str(more) = self.peek().clone() {
                    self.bump();
                    s.push_str(&more);
                }
                Ok(Expr::Str(s))
            }
            Tok::Name(n) => match n.as_str() {
                "True" => Ok(Expr::Bool(true)),
                "False" => Ok(Expr::Bool(false)),
                "None" => Ok(Expr::None),
                _ if is_keyword(&n) => Err(format!("line {line}: unexpected keyword `{n}`")),
                _ => Ok(Expr::Name(n)),
            },
            Tok::Op("(") => {
                if self.eat_op(")") {
                    return Ok(Expr::Tuple(vec![]));
                }
                let first = self.expr()?;
                if self.is_kw("for") {
                    return Err(self.error("generator expressions unsupported"));
                }
                if self.eat_op(")") {
                    return Ok(first);
                }
                let mut items = vec![first];
                while self.eat_op(",") {
                    if self.is_op(")") {
                        break;
                    }
                    items.push(self.expr()?);
                }
                self.expect_op(")")?;
                Ok(Expr::Tuple(items))
            }
            Tok::Op("[") => {
                if self.eat_op("]") {
                    return Ok(Expr::List(vec![]));
                }
                let first = self.expr()?;
                if self.eat_kw("for") {
                    let target = self.target_list()?;
                    if !self.eat_kw("in") {
                        return Err(self.error("expected `in`"));
                    }
                    let iter = self.or_expr()?;
                    let cond = if self.eat_kw("if") {
                        Some(Box::new(self.or_expr()?))
                    } else {
                        None
                    };
                    self.expect_op("]")?;
                    return Ok(Expr::ListComp {
                        elt: Box::new(first),
                        target,
                        iter: Box::new(iter),
                        cond,
                    });
                }
                let mut items = vec![first];
                while self.eat_op(",") {
                    if self.is_op("]") {
                        break;
                    }
                    items.push(self.expr()?);
                }
                self.expect_op("]")?;
                Ok(Expr::List(items))
            }
            Tok::Op("{") => {
                let mut pairs = Vec::new();
                while !self.is_op("}") {
                    let k = self.expr()?;
                    if !self.eat_op(":") {
                        return Err(self.error("set literals unsupported"));
                    }
                    let v = self.expr()?;
                    pairs.push((k, v));
                    if !self.eat_op(",") {
                        break;
                    }
                }
                self.expect_op("}")?;
                Ok(Expr::Dict(pairs))
            }
            other => Err(format!("line {line}: unexpected `{other}`")),
        }
    }
}

fn is_keyword(n: &str) -> bool {
    matches!(
        n,
        "def"
            | "if"
            | "elif"
            | "else"
            | "while"
            | "for"
            | "in"
            | "return"
            | "pass"
            | "break"
            | "continue"
            | "and"
            | "or"
            | "not"
            | "is"
            | "raise"
            | "assert"
            | "import"
            | "from"
            | "class"
            | "try"
            | "except"
            | "finally"
            | "with"
            | "lambda"
            | "global"
            | "nonlocal"
            | "del"
            | "yield"
            | "True"
            | "False"
            | "None"
    )
}

fn to_target(e: Expr) -> PResult<Target> {
    match e {
        Expr::Name(n) => Ok(Target::Name(n)),
        Expr::Tuple(items) | Expr::List(items) => {
            Ok(Target::Tuple(items.into_iter().map(to_target).collect::<PResult<_>>()?))
        }
        Expr::Index(obj, idx) => Ok(Target::Index(obj, idx)),
        other => Err(format!("cannot assign to {other:?}")),
    }
}
