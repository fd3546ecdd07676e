//! Task validators written directly against the output text.

/// Counts of the maximal runs `x1^k1 x2^k2 ...` when `w` is exactly such a
/// sequence of runs over `letters` in order.
pub fn runs(w: &str, letters: &[char]) -> Option<Vec<usize>> {
    let mut counts = vec![0; letters.len()];
    let mut at = 0;
    for ch in w.chars() {
        while at < letters.len() && letters[at] != ch {
            at += 1;
        }
        if at == letters.len() {
            return None;
        }
        counts[at] += 1;
    }
    Some(counts)
}

pub fn is_anbncn(w: &str) -> bool {
    matches!(runs(w, &['a', 'b', 'c']).as_deref(), Some([a, b, c]) if *a >= 1 && a == b && b == c)
}

pub fn is_ambncmdn(w: &str) -> bool {
    matches!(runs(w, &['a', 'b', 'c', 'd']).as_deref(),
        Some([a, b, c, d]) if *a >= 1 && *b >= 1 && a == c && b == d && a != b)
}

pub fn is_copy(w: &str) -> bool {
    let n = w.len();
    n >= 2 && n % 2 == 0 && w.chars().all(|c| c == 'a' || c == 'b') && w[..n / 2] == w[n / 2..]
}

/// Reads `[[1,2],[2,1]]` into rows of digits.
pub fn parse_board(text: &str) -> Option<Vec<Vec<u8>>> {
    let t = text.trim().strip_prefix('[')?.strip_suffix(']')?;
    let mut rows = Vec::new();
    let mut rest = t;
    while !rest.is_empty() {
        let r = rest.strip_prefix('[')?;
        let end = r.find(']')?;
        let row: Option<Vec<u8>> = r[..end].split(',').map(|c| c.trim().parse().ok()).collect();
        rows.push(row?);
        rest = &r[end + 1..];
        if let Some(x) = rest.strip_prefix(',') {
            rest = x;
            if rest.is_empty() {
                return None;
            }
        }
    }
    Some(rows)
}

/// Full solution check: shape, digit range, rows, columns, boxes when the
/// side is a perfect square, and agreement with the givens.
pub fn sudoku_solved(board: &[Vec<Option<u8>>], text: &str) -> bool {
    let n = board.len();
    let Some(sol) = parse_board(text) else { return false };
    if sol.len() != n || sol.iter().any(|r| r.len() != n) {
        return false;
    }
    let full: Vec<u8> = (1..=n as u8).collect();
    let is_perm = |mut v: Vec<u8>| {
        v.sort_unstable();
        v == full
    };
    for i in 0..n {
        if !is_perm(sol[i].clone()) || !is_perm((0..n).map(|r| sol[r][i]).collect()) {
            return false;
        }
    }
    let b = (n as f64).sqrt() as usize;
    if b * b == n && b > 1 {
        for br in 0..b {
            for bc in 0..b {
                let cells = (0..n).map(|k| sol[br * b + k / b][bc * b + k % b]).collect();
                if !is_perm(cells) {
                    return false;
                }
            }
        }
    }
    board.iter().zip(&sol).all(|(g, s)| g.iter().zip(s).all(|(g, s)| g.is_none_or(|g| g == *s)))
}

/// Reads `(0,1)(2,0)` into color pairs.
pub fn parse_pairs(text: &str) -> Option<Vec<(u8, u8)>> {
    let mut out = Vec::new();
    let mut rest = text.trim();
    while !rest.is_empty() {
        let r = rest.strip_prefix('(')?;
        let end = r.find(')')?;
        let (a, b) = r[..end].split_once(',')?;
        out.push((a.trim().parse().ok()?, b.trim().parse().ok()?));
        rest = &r[end + 1..];
    }
    Some(out)
}

/// Number of edges colored properly and consistently. Node colors are
/// fixed by their first mention; later mentions must agree.
pub fn properly_colored_edges(edges: &[(u32, u32)], pairs: &[(u8, u8)]) -> usize {
    let mut color = std::collections::HashMap::new();
    let mut good = 0;
    for (&(u, v), &(cu, cv)) in edges.iter().zip(pairs) {
        let fu = *color.entry(u).or_insert(cu);
        let fv = *color.entry(v).or_insert(cv);
        if cu < 3 && cv < 3 && cu != cv && fu == cu && fv == cv {
            good += 1;
        }
    }
    good
}

pub fn graph_colored(edges: &[(u32, u32)], text: &str) -> bool {
    parse_pairs(text).is_some_and(|p| p.len() == edges.len() && properly_colored_edges(edges, &p) == edges.len())
}

/// Whether some proper 3-coloring of nodes `0..nodes` exists, by exhaustive
/// assignment.
pub fn three_colorable(nodes: u32, edges: &[(u32, u32)]) -> bool {
    let n = nodes as usize;
    (0..3usize.pow(n as u32)).any(|mut code| {
        let mut c = vec![0; n];
        for x in c.iter_mut() {
            *x = code % 3;
            code /= 3;
        }
        edges.iter().all(|&(u, v)| c[u as usize] != c[v as usize])
    })
}
