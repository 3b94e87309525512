use super::{
    ActionSequence, AtomicAction, ElementAction, ElementVerb, KeyChord, MouseButton, ParseError,
};

const SUBCOMMANDS: &[&str] = &[
    "mousemove",
    "click",
    "type",
    "key",
    "mousedown",
    "mouseup",
    "sleep",
];

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Quoted(String),
    And,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    pos: usize,
}

fn syntax(position: usize, expected: &str) -> ParseError {
    ParseError::SyntaxError {
        position,
        expected: expected.to_string(),
    }
}

/// Whitespace-separated words, `'...'` strings with `\'`/`\\` escapes, and `&&`.
fn lex(text: &str) -> Result<Vec<Token>, ParseError> {
    let mut out = Vec::new();
    let mut iter = text.char_indices().peekable();
    while let Some(&(pos, c)) = iter.peek() {
        if c.is_whitespace() {
            iter.next();
            continue;
        }
        if c == '\'' {
            iter.next();
            let mut s = String::new();
            let mut closed = false;
            while let Some((_, c)) = iter.next() {
                match c {
                    '\'' => {
                        closed = true;
                        break;
                    }
                    '\\' => match iter.peek() {
                        Some(&(_, n)) if n == '\'' || n == '\\' => {
                            s.push(n);
                            iter.next();
                        }
                        _ => s.push('\\'),
                    },
                    other => s.push(other),
                }
            }
            if !closed {
                return Err(syntax(text.len(), "closing quote"));
            }
            out.push(Token {
                tok: Tok::Quoted(s),
                pos,
            });
            continue;
        }
        if text[pos..].starts_with("&&") {
            iter.next();
            iter.next();
            out.push(Token { tok: Tok::And, pos });
            continue;
        }
        let mut word = String::new();
        while let Some(&(p, c)) = iter.peek() {
            if c.is_whitespace() || c == '\'' || text[p..].starts_with("&&") {
                break;
            }
            word.push(c);
            iter.next();
        }
        out.push(Token {
            tok: Tok::Word(word),
            pos,
        });
    }
    Ok(out)
}

struct Cursor<'a> {
    tokens: &'a [Token],
    idx: usize,
    end: usize,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<&'a Token> {
        self.tokens.get(self.idx)
    }

    fn pos(&self) -> usize {
        self.peek().map(|t| t.pos).unwrap_or(self.end)
    }

    fn next(&mut self) -> Option<&'a Token> {
        let t = self.tokens.get(self.idx);
        if t.is_some() {
            self.idx += 1;
        }
        t
    }

    fn word(&mut self, expected: &str) -> Result<(&'a str, usize), ParseError> {
        let pos = self.pos();
        match self.next() {
            Some(Token {
                tok: Tok::Word(w), ..
            }) => Ok((w.as_str(), pos)),
            _ => Err(syntax(pos, expected)),
        }
    }

    fn at_clause_end(&self) -> bool {
        matches!(self.peek(), None | Some(Token { tok: Tok::And, .. }))
    }
}

fn parse_uint(word: &str, pos: usize, expected: &str) -> Result<u32, ParseError> {
    if word.is_empty() || !word.bytes().all(|b| b.is_ascii_digit()) {
        return Err(syntax(pos, expected));
    }
    word.parse().map_err(|_| syntax(pos, expected))
}

fn parse_button(c: &mut Cursor<'_>) -> Result<MouseButton, ParseError> {
    let (w, pos) = c.word("button number 1-5")?;
    match w.as_bytes() {
        [d @ b'1'..=b'5'] => Ok(MouseButton::from_code(d - b'0').expect("1..=5")),
        _ => Err(syntax(pos, "button number 1-5")),
    }
}

/// `DIGITS ["." DIGITS]` seconds, rounded half-up to whole milliseconds.
fn parse_decimal_millis(word: &str, pos: usize) -> Result<u64, ParseError> {
    let bad = || syntax(pos, "decimal seconds");
    let (int, frac) = match word.split_once('.') {
        Some((i, f)) => (i, f),
        None => (word, ""),
    };
    let digits = |s: &str| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit());
    if !digits(int) || (word.contains('.') && !digits(frac)) {
        return Err(bad());
    }
    let secs: u64 = int.parse().map_err(|_| bad())?;
    let mut millis: u64 = 0;
    for (i, b) in frac.bytes().take(3).enumerate() {
        millis += u64::from(b - b'0') * 10u64.pow(2 - i as u32);
    }
    if frac.len() > 3 && frac.as_bytes()[3] >= b'5' {
        millis += 1;
    }
    secs.checked_mul(1000)
        .and_then(|m| m.checked_add(millis))
        .ok_or_else(bad)
}

fn parse_subcommand(c: &mut Cursor<'_>, out: &mut Vec<AtomicAction>) -> Result<(), ParseError> {
    let pos = c.pos();
    let name = match c.next() {
        Some(Token {
            tok: Tok::Word(w), ..
        }) => w.as_str(),
        _ => return Err(syntax(pos, "subcommand")),
    };
    match name {
        "mousemove" => {
            let (xs, xp) = c.word("x coordinate")?;
            let x = parse_uint(xs, xp, "non-negative integer x coordinate")?;
            let (ys, yp) = c.word("y coordinate")?;
            let y = parse_uint(ys, yp, "non-negative integer y coordinate")?;
            out.push(AtomicAction::MouseMove { x, y });
        }
        "click" => out.push(AtomicAction::Click {
            button: parse_button(c)?,
        }),
        "mousedown" => out.push(AtomicAction::MouseDown {
            button: parse_button(c)?,
        }),
        "mouseup" => out.push(AtomicAction::MouseUp {
            button: parse_button(c)?,
        }),
        "type" => {
            let pos = c.pos();
            match c.next() {
                Some(Token {
                    tok: Tok::Quoted(s),
                    ..
                }) if !s.is_empty() => out.push(AtomicAction::Type { text: s.clone() }),
                _ => return Err(syntax(pos, "non-empty single-quoted string")),
            }
        }
        "key" => {
            let mut count = 0;
            while let Some(Token {
                tok: Tok::Word(w),
                pos,
            }) = c.peek()
            {
                if SUBCOMMANDS.contains(&w.as_str()) || w == "xdotool" {
                    break;
                }
                let chord = KeyChord::parse(w).ok_or_else(|| syntax(*pos, "key chord"))?;
                out.push(AtomicAction::Key { chord });
                c.next();
                count += 1;
            }
            if count == 0 {
                return Err(syntax(c.pos(), "key chord"));
            }
        }
        "sleep" => {
            let (w, p) = c.word("decimal seconds")?;
            out.push(AtomicAction::Sleep {
                millis: parse_decimal_millis(w, p)?,
            });
        }
        other => {
            return Err(ParseError::UnknownSubcommand {
                position: pos,
                name: other.to_string(),
            })
        }
    }
    Ok(())
}

/// Parses an xdotool-style command string into an [`ActionSequence`].
pub fn parse_command(text: &str) -> Result<ActionSequence, ParseError> {
    let tokens = lex(text)?;
    if tokens.is_empty() {
        return Err(ParseError::EmptyCommand);
    }
    let mut c = Cursor {
        tokens: &tokens,
        idx: 0,
        end: text.len(),
    };
    let mut actions = Vec::new();
    loop {
        let (head, pos) = c.word("\"xdotool\"")?;
        if head != "xdotool" {
            return Err(syntax(pos, "\"xdotool\""));
        }
        if c.at_clause_end() {
            return Err(syntax(c.pos(), "subcommand"));
        }
        while !c.at_clause_end() {
            parse_subcommand(&mut c, &mut actions)?;
        }
        match c.next() {
            None => break,
            Some(Token { tok: Tok::And, .. }) => {
                if c.peek().is_none() {
                    return Err(syntax(c.pos(), "clause after \"&&\""));
                }
            }
            Some(t) => return Err(syntax(t.pos, "\"&&\" or end of command")),
        }
    }
    Ok(ActionSequence::new(actions))
}

/// Parses `click [7]`, `type_into [3] 'text'` or `key_into [3] ctrl+a`.
pub fn parse_element_action(text: &str) -> Result<ElementAction, ParseError> {
    let tokens = lex(text)?;
    if tokens.is_empty() {
        return Err(ParseError::EmptyCommand);
    }
    let mut c = Cursor {
        tokens: &tokens,
        idx: 0,
        end: text.len(),
    };
    let (verb_word, vpos) = c.word("element verb")?;
    let verb = match verb_word {
        "click" => ElementVerb::Click,
        "type_into" => ElementVerb::TypeInto,
        "key_into" => ElementVerb::KeyInto,
        other => {
            return Err(ParseError::UnknownSubcommand {
                position: vpos,
                name: other.to_string(),
            })
        }
    };
    let (id_word, ipos) = c.word("[element id]")?;
    let element_id = id_word
        .strip_prefix('[')
        .and_then(|s| s.strip_suffix(']'))
        .and_then(|s| parse_uint(s, ipos, "").ok())
        .filter(|id| *id > 0)
        .ok_or_else(|| syntax(ipos, "[element id]"))?;
    let payload = match verb {
        ElementVerb::Click => None,
        ElementVerb::TypeInto => {
            let pos = c.pos();
            match c.next() {
                Some(Token {
                    tok: Tok::Quoted(s),
                    ..
                }) if !s.is_empty() => Some(s.clone()),
                _ => return Err(syntax(pos, "non-empty single-quoted string")),
            }
        }
        ElementVerb::KeyInto => {
            let mut chords = Vec::new();
            while let Some(Token {
                tok: Tok::Word(w), ..
            }) = c.peek()
            {
                chords.push(w.clone());
                c.next();
            }
            if chords.is_empty() {
                return Err(syntax(c.pos(), "key chord"));
            }
            Some(chords.join(" "))
        }
    };
    if let Some(t) = c.peek() {
        return Err(syntax(t.pos, "end of element action"));
    }
    Ok(ElementAction {
        verb,
        element_id,
        payload,
    })
}
