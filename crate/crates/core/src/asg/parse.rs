use std::collections::{BTreeSet, HashMap};

use super::{Grammar, GrammarError, NtId, Production, Symbol, TermId};
use crate::logic::{LogicFragment, Rule};
use crate::syntax::{lex, parse_rules, Cursor, RuleSrc, Tok};

enum RawSym {
    T(String),
    N(String, usize, usize),
}

struct RawProd {
    head: String,
    body: Vec<RawSym>,
    rules: Vec<RuleSrc>,
}

pub(super) fn parse_grammar(src: &str) -> Result<Grammar, GrammarError> {
    let toks = lex(src)?;
    let mut c = Cursor::new(&toks);
    let mut prods: Vec<RawProd> = Vec::new();
    let mut background: Vec<RuleSrc> = Vec::new();
    let mut nt_order: Vec<String> = Vec::new();
    let mut nt_seen: HashMap<String, usize> = HashMap::new();
    let mut heads: BTreeSet<String> = BTreeSet::new();
    let mut note = |name: &str, order: &mut Vec<String>| {
        if !nt_seen.contains_key(name) {
            nt_seen.insert(name.to_string(), order.len());
            order.push(name.to_string());
        }
    };

    loop {
        match c.peek().clone() {
            Tok::Eof => break,
            Tok::Directive(d) if d == "background" => {
                c.bump();
                c.expect(Tok::LBrace)?;
                background.extend(parse_rules(&mut c)?);
                c.expect(Tok::RBrace)?;
            }
            Tok::Directive(d) => return Err(c.error(format!("unknown directive #{d}")).into()),
            Tok::Ident(head) | Tok::Var(head) if *c.peek_at(1) == Tok::Arrow => {
                c.bump();
                c.bump();
                note(&head, &mut nt_order);
                heads.insert(head.clone());
                loop {
                    let mut body = Vec::new();
                    loop {
                        let at_next_head =
                            matches!(c.peek(), Tok::Ident(_) | Tok::Var(_)) && *c.peek_at(1) == Tok::Arrow;
                        if at_next_head {
                            break;
                        }
                        let (line, col) = c.here();
                        match c.peek().clone() {
                            Tok::Str(s) => {
                                if s.is_empty() {
                                    return Err(c.error("empty terminal").into());
                                }
                                c.bump();
                                body.push(RawSym::T(s));
                            }
                            Tok::Ident(n) | Tok::Var(n) => {
                                c.bump();
                                note(&n, &mut nt_order);
                                body.push(RawSym::N(n, line, col));
                            }
                            _ => break,
                        }
                    }
                    let rules = if *c.peek() == Tok::LBrace {
                        c.bump();
                        let r = parse_rules(&mut c)?;
                        c.expect(Tok::RBrace)?;
                        r
                    } else {
                        Vec::new()
                    };
                    prods.push(RawProd { head: head.clone(), body, rules });
                    if *c.peek() == Tok::Pipe {
                        c.bump();
                    } else {
                        break;
                    }
                }
            }
            t => return Err(c.error(format!("expected a production or #background, found {t}")).into()),
        }
    }
    if prods.is_empty() {
        return Err(c.error("grammar has no productions").into());
    }

    let terminals: Vec<String> = prods
        .iter()
        .flat_map(|p| p.body.iter())
        .filter_map(|s| match s {
            RawSym::T(t) => Some(t.clone()),
            RawSym::N(..) => None,
        })
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let tid = |t: &str| TermId(terminals.binary_search_by(|x| x.as_str().cmp(t)).expect("collected") as u32);

    let mut productions = Vec::with_capacity(prods.len());
    for p in prods {
        let mut body = Vec::with_capacity(p.body.len());
        for s in &p.body {
            body.push(match s {
                RawSym::T(t) => Symbol::T(tid(t)),
                RawSym::N(n, line, col) => {
                    if !heads.contains(n) {
                        return Err(GrammarError::Reference {
                            line: *line,
                            col: *col,
                            msg: format!("nonterminal `{n}` has no productions"),
                        });
                    }
                    Symbol::N(NtId(nt_seen[n] as u32))
                }
            });
        }
        for r in &p.rules {
            for &(k, line, col) in &r.child_refs {
                if k > body.len() {
                    return Err(GrammarError::Reference {
                        line,
                        col,
                        msg: format!("@{k} refers past the {} symbol(s) of the production", body.len()),
                    });
                }
            }
        }
        let annotation = fragment(p.rules)?;
        productions.push(Production { head: NtId(nt_seen[&p.head] as u32), body, annotation });
    }
    for r in &background {
        if let Some(&(k, line, col)) = r.child_refs.first() {
            return Err(GrammarError::Reference { line, col, msg: format!("@{k} is not allowed in the background") });
        }
    }
    let background = fragment(background)?;
    let start = productions[0].head;
    Grammar::build(terminals, nt_order, productions, start, background)
}

fn fragment(rules: Vec<RuleSrc>) -> Result<LogicFragment, GrammarError> {
    let rules: Vec<Rule> = rules.into_iter().map(|r| r.rule).collect();
    LogicFragment::new(rules).map_err(GrammarError::Stratification)
}
