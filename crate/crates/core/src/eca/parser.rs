//! Recursive-descent parser for rule files.
//!
//! ```text
//! File    := ["Begin" "{"] {RuleSet} ["}" "End"]
//! RuleSet := "rules" ["for" Target {"," Target}] [Mode] "{" {Rule} "}"
//! Mode    := "sequence" | "choice" | "loop" "until" Event
//! Rule    := "When" Event ("{" Body "}" | Body)
//! Body    := ["If" Cond] "THEN" "DO" Action {Action}
//! Action  := "<" Ident ">" "." Ident ":" Ident "(" [Lit {"," Lit}] ")" [";"]
//! Cond    := And {"||" And};  And := Unary {"&&" Unary}
//! Unary   := "!" Unary | "(" Cond ")" | Operand [CmpOp Operand]
//! ```

use super::ast::*;
use super::lexer::{tokenize, Keyword, Token, TokenKind};
use super::SyntaxError;
use crate::value::TimeOfDay;

pub fn parse_file(src: &str) -> Result<RuleFile, SyntaxError> {
    let tokens = tokenize(src)?;
    let mut p = Parser { tokens, pos: 0 };
    p.file()
}

/// Rule sets of a file, ignoring the optional `Begin { .. } End` wrapper.
pub fn parse_rules(src: &str) -> Result<Vec<RuleSet>, SyntaxError> {
    Ok(parse_file(src)?.sets)
}

/// Parses a standalone condition expression.
pub fn parse_condition(src: &str) -> Result<Expr, SyntaxError> {
    let tokens = tokenize(src)?;
    let mut p = Parser { tokens, pos: 0 };
    let e = p.or_expr()?;
    p.expect(&TokenKind::Eof, "end of input")?;
    Ok(e)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn peek_kind(&self) -> &TokenKind {
        &self.tokens[self.pos].kind
    }

    fn advance(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos < self.tokens.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn error(&self, expected: &[&str]) -> SyntaxError {
        let t = self.peek();
        SyntaxError::new(t.line, t.column, expected.to_vec(), &t.kind.to_string())
    }

    fn at_kw(&self, k: Keyword) -> bool {
        *self.peek_kind() == TokenKind::Keyword(k)
    }

    fn eat(&mut self, kind: &TokenKind) -> bool {
        if self.peek_kind() == kind {
            self.advance();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, kind: &TokenKind, label: &str) -> Result<Token, SyntaxError> {
        if self.peek_kind() == kind {
            Ok(self.advance())
        } else {
            Err(self.error(&[label]))
        }
    }

    fn ident(&mut self, label: &str) -> Result<String, SyntaxError> {
        match self.peek_kind() {
            TokenKind::Ident(s) => {
                let s = s.clone();
                self.advance();
                Ok(s)
            }
            _ => Err(self.error(&[label])),
        }
    }

    /// Identifier, or a keyword when it follows a `.` inside a dotted name.
    fn segment(&mut self, after_dot: bool, label: &str) -> Result<String, SyntaxError> {
        match self.peek_kind() {
            TokenKind::Ident(_) => self.ident(label),
            TokenKind::Keyword(_) if after_dot => Ok(self.advance().text),
            _ => Err(self.error(&[label])),
        }
    }

    fn dotted(&mut self, label: &str) -> Result<String, SyntaxError> {
        let mut name = self.segment(false, label)?;
        while *self.peek_kind() == TokenKind::Dot {
            self.advance();
            name.push('.');
            name.push_str(&self.segment(true, "name after `.`")?);
        }
        Ok(name)
    }

    fn file(&mut self) -> Result<RuleFile, SyntaxError> {
        let wrapped = self.at_kw(Keyword::Begin);
        if wrapped {
            self.advance();
            self.expect(&TokenKind::LBrace, "`{`")?;
        }
        let mut sets = Vec::new();
        while self.at_kw(Keyword::Rules) {
            sets.push(self.rule_set()?);
        }
        if wrapped {
            if *self.peek_kind() != TokenKind::RBrace {
                return Err(self.error(&["`rules`", "`}`"]));
            }
            self.advance();
            self.expect(&TokenKind::Keyword(Keyword::End), "`End`")?;
        }
        if *self.peek_kind() != TokenKind::Eof {
            let expected: &[&str] = if wrapped { &["end of input"] } else { &["`rules`", "end of input"] };
            return Err(self.error(expected));
        }
        Ok(RuleFile { wrapped, sets })
    }

    fn rule_set(&mut self) -> Result<RuleSet, SyntaxError> {
        self.advance(); // `rules`
        let mut targets = Vec::new();
        if self.at_kw(Keyword::For) {
            self.advance();
            targets.push(self.target()?);
            while self.eat(&TokenKind::Comma) {
                targets.push(self.target()?);
            }
        }
        let (mut mode, mut mode_explicit, mut stop_event) = (Mode::Sequence, false, None);
        match self.peek_kind() {
            TokenKind::Keyword(Keyword::Sequence) => {
                self.advance();
                mode_explicit = true;
            }
            TokenKind::Keyword(Keyword::Choice) => {
                self.advance();
                mode = Mode::Choice;
                mode_explicit = true;
            }
            TokenKind::Keyword(Keyword::Loop) => {
                self.advance();
                mode = Mode::Loop;
                mode_explicit = true;
                self.expect(&TokenKind::Keyword(Keyword::Until), "`until`")?;
                stop_event = Some(self.event_ref()?);
            }
            TokenKind::LBrace => {}
            _ => {
                let expected: &[&str] = if targets.is_empty() {
                    &["`for`", "`sequence`", "`choice`", "`loop`", "`{`"]
                } else {
                    &["`,`", "`sequence`", "`choice`", "`loop`", "`{`"]
                };
                return Err(self.error(expected));
            }
        }
        self.expect(&TokenKind::LBrace, "`{`")?;
        let mut rules = Vec::new();
        loop {
            if self.at_kw(Keyword::When) {
                rules.push(self.rule()?);
            } else if self.eat(&TokenKind::RBrace) {
                break;
            } else {
                return Err(self.error(&["`When`", "`}`"]));
            }
        }
        Ok(RuleSet { targets, mode, mode_explicit, stop_event, rules })
    }

    fn target(&mut self) -> Result<Target, SyntaxError> {
        let angled = self.eat(&TokenKind::Lt);
        let name = self.ident("target name")?;
        let template = self.eat(&TokenKind::Star);
        if angled {
            self.expect(&TokenKind::Gt, "`>`")?;
        }
        Ok(Target { name, template, angled })
    }

    fn event_ref(&mut self) -> Result<EventRef, SyntaxError> {
        let name = self.dotted("event name")?;
        let call_parens = self.eat(&TokenKind::LParen);
        if call_parens {
            self.expect(&TokenKind::RParen, "`)`")?;
        }
        Ok(EventRef { name, call_parens })
    }

    fn rule(&mut self) -> Result<Rule, SyntaxError> {
        self.advance(); // `When`
        let event = self.event_ref()?;
        let braced = self.eat(&TokenKind::LBrace);
        let condition = if self.at_kw(Keyword::If) {
            self.advance();
            Some(self.or_expr()?)
        } else {
            None
        };
        if !self.at_kw(Keyword::Then) {
            return Err(self.error(if condition.is_some() {
                &["`THEN DO`", "`&&`", "`||`"]
            } else {
                &["`If`", "`THEN DO`"]
            }));
        }
        self.advance();
        self.expect(&TokenKind::Keyword(Keyword::Do), "`THEN DO`")?;
        let mut actions = vec![self.action()?];
        while *self.peek_kind() == TokenKind::Lt {
            actions.push(self.action()?);
        }
        if braced {
            if *self.peek_kind() != TokenKind::RBrace {
                return Err(self.error(&["`<`", "`}`"]));
            }
            self.advance();
        }
        Ok(Rule { event, condition, actions, braced })
    }

    fn action(&mut self) -> Result<ActionSpec, SyntaxError> {
        self.expect(&TokenKind::Lt, "`<` starting an action")?;
        let provider = self.ident("provider name")?;
        self.expect(&TokenKind::Gt, "`>`")?;
        self.expect(&TokenKind::Dot, "`.`")?;
        let service = self.ident("service name")?;
        self.expect(&TokenKind::Colon, "`:`")?;
        let method = self.ident("method name")?;
        self.expect(&TokenKind::LParen, "`(`")?;
        let mut args = Vec::new();
        if *self.peek_kind() != TokenKind::RParen {
            args.push(self.literal()?);
            while self.eat(&TokenKind::Comma) {
                args.push(self.literal()?);
            }
        }
        if *self.peek_kind() != TokenKind::RParen {
            return Err(self.error(&["`,`", "`)`"]));
        }
        self.advance();
        let terminated = self.eat(&TokenKind::Semi);
        Ok(ActionSpec { provider, service, method, args, terminated })
    }

    fn literal(&mut self) -> Result<Literal, SyntaxError> {
        match self.peek_kind().clone() {
            TokenKind::Number(n) => {
                let start = self.advance();
                if *self.peek_kind() == TokenKind::Colon {
                    return self.time_tail(&start, n);
                }
                Ok(Literal::Number(n))
            }
            TokenKind::Str(s) => {
                self.advance();
                Ok(Literal::Str(s))
            }
            TokenKind::Keyword(Keyword::True) => {
                self.advance();
                Ok(Literal::Bool(true))
            }
            TokenKind::Keyword(Keyword::False) => {
                self.advance();
                Ok(Literal::Bool(false))
            }
            TokenKind::Ident(s) => {
                self.advance();
                Ok(Literal::Ident(s))
            }
            _ => Err(self.error(&["literal"])),
        }
    }

    /// `H:MM` after the hour has been consumed.
    fn time_tail(&mut self, start: &Token, hour: f64) -> Result<Literal, SyntaxError> {
        self.advance(); // `:`
        let minute_tok = self.peek().clone();
        let TokenKind::Number(minute) = minute_tok.kind else {
            return Err(self.error(&["minutes"]));
        };
        self.advance();
        let valid = hour.fract() == 0.0
            && minute.fract() == 0.0
            && (0.0..24.0).contains(&hour)
            && (0.0..60.0).contains(&minute)
            && minute_tok.text.len() == 2;
        if !valid {
            return Err(SyntaxError::new(
                start.line,
                start.column,
                vec!["time of day H:MM"],
                &format!("`{}:{}`", start.text, minute_tok.text),
            ));
        }
        Ok(Literal::Time(TimeOfDay::from_minutes((hour as u16) * 60 + minute as u16).expect("range checked")))
    }

    fn or_expr(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.and_expr()?;
        while self.eat(&TokenKind::OrOr) {
            let rhs = self.and_expr()?;
            lhs = Expr::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.unary()?;
        while self.eat(&TokenKind::AndAnd) {
            let rhs = self.unary()?;
            lhs = Expr::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, SyntaxError> {
        if self.eat(&TokenKind::Bang) {
            return Ok(Expr::Not(Box::new(self.unary()?)));
        }
        if self.eat(&TokenKind::LParen) {
            let inner = self.or_expr()?;
            if *self.peek_kind() != TokenKind::RParen {
                return Err(self.error(&["`)`", "`&&`", "`||`"]));
            }
            self.advance();
            return Ok(Expr::Paren(Box::new(inner)));
        }
        let lhs = self.operand()?;
        let op = match self.peek_kind() {
            TokenKind::Lt => CmpOp::Lt,
            TokenKind::Le => CmpOp::Le,
            TokenKind::Gt => CmpOp::Gt,
            TokenKind::Ge => CmpOp::Ge,
            TokenKind::EqEq => CmpOp::Eq,
            TokenKind::Ne => CmpOp::Ne,
            _ => return Ok(Expr::Truth(lhs)),
        };
        self.advance();
        let rhs = self.operand()?;
        Ok(Expr::Cmp(lhs, op, rhs))
    }

    fn operand(&mut self) -> Result<Operand, SyntaxError> {
        match self.peek_kind() {
            TokenKind::Ident(_) => Ok(Operand::Var(self.dotted("variable")?)),
            TokenKind::Number(_)
            | TokenKind::Str(_)
            | TokenKind::Keyword(Keyword::True)
            | TokenKind::Keyword(Keyword::False) => Ok(Operand::Lit(self.literal()?)),
            _ => Err(self.error(&["variable", "literal", "`(`", "`!`"])),
        }
    }
}
