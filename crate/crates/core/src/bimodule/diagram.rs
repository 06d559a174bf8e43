//! Textual string diagrams.
//!
//! ```text
//! diagram := stage (';' stage)*
//! stage   := factor ('|' factor)*
//! factor  := 'id(' word ')' | 'r' | 'rbar' | 'r*' | 'rbar*' | 'box(' NAME ')' | NAME | '(' diagram ')'
//! word    := ('i' | 'ibar')+ | '1N' | '1M'
//! ```
//!
//! `a | b` is `a ⊗ b` with `a` outermost; `p ; q` is `q ∘ p`, read top to
//! bottom. Any factor may carry a trailing `*`.

use std::fmt;

use super::word::Word;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Diagram {
    /// Stages applied top to bottom.
    Vertical(Vec<Diagram>),
    /// Factors from outermost to innermost.
    Horizontal(Vec<Diagram>),
    Id(Word),
    R,
    RBar,
    /// A named binding: an intertwiner or a central element.
    Box(String),
    Adjoint(Box<Diagram>),
}

impl fmt::Display for Diagram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |f: &mut fmt::Formatter<'_>, parts: &[Diagram], sep: &str| -> fmt::Result {
            write!(f, "(")?;
            for (k, p) in parts.iter().enumerate() {
                if k > 0 {
                    write!(f, "{sep}")?;
                }
                write!(f, "{p}")?;
            }
            write!(f, ")")
        };
        match self {
            Diagram::Vertical(parts) => join(f, parts, " ; "),
            Diagram::Horizontal(parts) => join(f, parts, " | "),
            Diagram::Id(w) => write!(f, "id({w})"),
            Diagram::R => write!(f, "r"),
            Diagram::RBar => write!(f, "rbar"),
            Diagram::Box(name) => write!(f, "box({name})"),
            Diagram::Adjoint(inner) => write!(f, "{inner}*"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    LParen,
    RParen,
    Semi,
    Bar,
    Star,
    Ident(String),
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::LParen => write!(f, "`(`"),
            Tok::RParen => write!(f, "`)`"),
            Tok::Semi => write!(f, "`;`"),
            Tok::Bar => write!(f, "`|`"),
            Tok::Star => write!(f, "`*`"),
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Eof => write!(f, "end of input"),
        }
    }
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    column: usize,
}

fn lex(text: &str) -> Result<Vec<Spanned>> {
    let mut out = Vec::new();
    let (mut line, mut column) = (1, 1);
    let mut chars = text.chars().peekable();
    while let Some(&ch) = chars.peek() {
        let (l, col) = (line, column);
        let single = match ch {
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            ';' => Some(Tok::Semi),
            '|' => Some(Tok::Bar),
            '*' => Some(Tok::Star),
            _ => None,
        };
        if let Some(tok) = single {
            chars.next();
            column += 1;
            out.push(Spanned { tok, line: l, column: col });
        } else if ch == '\n' {
            chars.next();
            line += 1;
            column = 1;
        } else if ch.is_whitespace() {
            chars.next();
            column += 1;
        } else if ch.is_alphanumeric() || ch == '_' {
            let mut s = String::new();
            while let Some(&c) = chars.peek() {
                if !(c.is_alphanumeric() || c == '_') {
                    break;
                }
                s.push(c);
                chars.next();
                column += 1;
            }
            out.push(Spanned { tok: Tok::Ident(s), line: l, column: col });
        } else {
            return Err(Error::Syntax { line: l, column: col, message: format!("unexpected character `{ch}`") });
        }
    }
    out.push(Spanned { tok: Tok::Eof, line, column });
    Ok(out)
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Spanned {
        &self.toks[self.pos]
    }

    fn next(&mut self) -> Spanned {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error(at: &Spanned, message: String) -> Error {
        Error::Syntax { line: at.line, column: at.column, message }
    }

    fn expect(&mut self, tok: Tok) -> Result<()> {
        let t = self.next();
        if t.tok != tok {
            return Err(Self::error(&t, format!("expected {tok}, found {}", t.tok)));
        }
        Ok(())
    }

    fn diagram(&mut self) -> Result<Diagram> {
        let mut stages = vec![self.stage()?];
        while self.peek().tok == Tok::Semi {
            self.next();
            stages.push(self.stage()?);
        }
        Ok(if stages.len() == 1 { stages.pop().expect("one stage") } else { Diagram::Vertical(stages) })
    }

    fn stage(&mut self) -> Result<Diagram> {
        let mut factors = vec![self.factor()?];
        while self.peek().tok == Tok::Bar {
            self.next();
            factors.push(self.factor()?);
        }
        Ok(if factors.len() == 1 { factors.pop().expect("one factor") } else { Diagram::Horizontal(factors) })
    }

    fn factor(&mut self) -> Result<Diagram> {
        let t = self.next();
        let mut d = match &t.tok {
            Tok::LParen => {
                let inner = self.diagram()?;
                self.expect(Tok::RParen)?;
                inner
            }
            Tok::Ident(name) => match name.as_str() {
                "id" if self.peek().tok == Tok::LParen => {
                    self.next();
                    Diagram::Id(self.word()?)
                }
                "box" if self.peek().tok == Tok::LParen => {
                    self.next();
                    let n = self.next();
                    let Tok::Ident(name) = n.tok.clone() else {
                        return Err(Self::error(&n, format!("expected a box name, found {}", n.tok)));
                    };
                    self.expect(Tok::RParen)?;
                    Diagram::Box(name)
                }
                "r" => Diagram::R,
                "rbar" => Diagram::RBar,
                "id" | "box" => return Err(Self::error(self.peek(), format!("expected `(` after `{name}`"))),
                _ => Diagram::Box(name.clone()),
            },
            other => return Err(Self::error(&t, format!("expected a factor, found {other}"))),
        };
        while self.peek().tok == Tok::Star {
            self.next();
            d = Diagram::Adjoint(Box::new(d));
        }
        Ok(d)
    }

    fn word(&mut self) -> Result<Word> {
        let start = self.peek().clone();
        let mut text = String::new();
        while let Tok::Ident(s) = &self.peek().tok {
            text.push_str(s);
            text.push(' ');
            self.next();
        }
        self.expect(Tok::RParen)?;
        Word::parse(&text).map_err(|_| {
            Self::error(&start, format!("`{}` is not a word in i, ibar, 1N, 1M", text.trim()))
        })
    }
}

pub fn parse_diagram(text: &str) -> Result<Diagram> {
    let mut p = Parser { toks: lex(text)?, pos: 0 };
    let d = p.diagram()?;
    let t = p.peek();
    if t.tok != Tok::Eof {
        return Err(Parser::error(t, format!("unexpected {}", t.tok)));
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conjugate_equation_shape() {
        let d = parse_diagram("(id(i) | r) ; (rbar* | id(i))").unwrap();
        let Diagram::Vertical(stages) = d else { panic!("vertical expected") };
        assert_eq!(stages.len(), 2);
        assert_eq!(stages[0], Diagram::Horizontal(vec![Diagram::Id(Word::iota()), Diagram::R]));
        assert_eq!(stages[1], Diagram::Horizontal(vec![Diagram::Adjoint(Box::new(Diagram::RBar)), Diagram::Id(Word::iota())]));
    }

    #[test]
    fn boxes_and_words() {
        let d = parse_diagram("rbar ; (id(i) | rstar_rr | id(ibar)) ; rbar*").unwrap();
        let Diagram::Vertical(stages) = d else { panic!() };
        let Diagram::Horizontal(f) = &stages[1] else { panic!() };
        assert_eq!(f[1], Diagram::Box("rstar_rr".into()));
        assert_eq!(parse_diagram("box(z)").unwrap(), Diagram::Box("z".into()));
        assert_eq!(parse_diagram("id(i ibar i)").unwrap(), Diagram::Id(Word::parse("iibari").unwrap()));
        assert_eq!(parse_diagram("id(1N)").unwrap().to_string(), "id(1N)");
    }

    #[test]
    fn positioned_errors() {
        match parse_diagram("(r | id(i)") {
            Err(Error::Syntax { line: 1, column: 11, .. }) => {}
            other => panic!("{other:?}"),
        }
        match parse_diagram("r ;\n  | r") {
            Err(Error::Syntax { line: 2, column: 3, .. }) => {}
            other => panic!("{other:?}"),
        }
        match parse_diagram("id(ii)") {
            Err(Error::Syntax { line: 1, column: 4, .. }) => {}
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_diagram("r $"), Err(Error::Syntax { column: 3, .. })));
        assert!(matches!(parse_diagram("r r"), Err(Error::Syntax { column: 3, .. })));
    }
}
