//! Exhaustive answer-set enumeration for small ground programs.

use std::collections::BTreeSet;

use super::LogicError;

/// A ground normal rule over atom ids. `head: None` is a constraint.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroundRule {
    pub head: Option<usize>,
    pub pos: Vec<usize>,
    pub neg: Vec<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GroundProgram {
    pub atoms: Vec<String>,
    pub rules: Vec<GroundRule>,
}

impl GroundProgram {
    pub fn atom(&mut self, name: &str) -> usize {
        match self.atoms.iter().position(|a| a == name) {
            Some(i) => i,
            None => {
                self.atoms.push(name.to_string());
                self.atoms.len() - 1
            }
        }
    }

    pub fn rule(&mut self, head: Option<&str>, pos: &[&str], neg: &[&str]) {
        let head = head.map(|h| self.atom(h));
        let pos = pos.iter().map(|a| self.atom(a)).collect();
        let neg = neg.iter().map(|a| self.atom(a)).collect();
        self.rules.push(GroundRule { head, pos, neg });
    }
}

pub const ORACLE_LIMIT: usize = 20;

/// Enumerates every answer set by checking each candidate interpretation
/// against the least model of its reduct.
pub fn enumerate_models_bruteforce(p: &GroundProgram) -> Result<Vec<BTreeSet<String>>, LogicError> {
    let n = p.atoms.len();
    if n > ORACLE_LIMIT {
        return Err(LogicError::OracleTooLarge(n));
    }
    let mut out = Vec::new();
    for mask in 0u32..(1u32 << n) {
        let inside = |a: usize| mask & (1 << a) != 0;
        // Reduct: drop rules with a negative literal in the candidate.
        let reduct: Vec<&GroundRule> = p.rules.iter().filter(|r| r.neg.iter().all(|a| !inside(*a))).collect();
        let mut least = vec![false; n];
        loop {
            let mut changed = false;
            for r in &reduct {
                if let Some(h) = r.head {
                    if !least[h] && r.pos.iter().all(|a| least[*a]) {
                        least[h] = true;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        if (0..n).any(|a| least[a] != inside(a)) {
            continue;
        }
        let violated = p
            .rules
            .iter()
            .any(|r| r.head.is_none() && r.pos.iter().all(|a| inside(*a)) && r.neg.iter().all(|a| !inside(*a)));
        if violated {
            continue;
        }
        out.push((0..n).filter(|a| inside(*a)).map(|a| p.atoms[a].clone()).collect());
    }
    Ok(out)
}
