//! Compact letter display by insertion and absorption.

/// Letters per group such that significantly different groups share no
/// letter and every non-significant pair shares one. Letters are handed out
/// in order of the highest-mean group each column contains.
pub fn compact_letters(means: &[f64], significant: &[Vec<bool>]) -> Vec<String> {
    let k = means.len();
    if k == 0 {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| means[b].total_cmp(&means[a]).then(a.cmp(&b)));
    let rank: Vec<usize> = {
        let mut r = vec![0; k];
        for (pos, &g) in order.iter().enumerate() {
            r[g] = pos;
        }
        r
    };
    // columns as membership vectors
    let mut cols: Vec<Vec<bool>> = vec![vec![true; k]];
    for a in 0..k {
        for b in a + 1..k {
            if !significant[a][b] {
                continue;
            }
            let mut next = Vec::with_capacity(cols.len() + 1);
            for c in cols {
                if c[a] && c[b] {
                    let mut without_a = c.clone();
                    without_a[a] = false;
                    let mut without_b = c;
                    without_b[b] = false;
                    next.push(without_a);
                    next.push(without_b);
                } else {
                    next.push(c);
                }
            }
            cols = absorb(next);
        }
    }
    cols.sort_by_key(|c| {
        let first = (0..k).filter(|&g| c[g]).map(|g| rank[g]).min().unwrap_or(k);
        let members: Vec<usize> = {
            let mut m: Vec<usize> = (0..k).filter(|&g| c[g]).map(|g| rank[g]).collect();
            m.sort_unstable();
            m
        };
        (first, members)
    });
    let mut out = vec![String::new(); k];
    for (li, c) in cols.iter().enumerate() {
        let letter = letter(li);
        for g in 0..k {
            if c[g] {
                out[g].push_str(&letter);
            }
        }
    }
    out
}

fn letter(i: usize) -> String {
    const A: &[u8] = b"abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ";
    if i < A.len() {
        (A[i] as char).to_string()
    } else {
        format!("{}{}", A[i % A.len()] as char, i / A.len())
    }
}

/// Drops empty columns and columns contained in another column.
fn absorb(cols: Vec<Vec<bool>>) -> Vec<Vec<bool>> {
    let mut keep: Vec<Vec<bool>> = Vec::new();
    let subset = |a: &[bool], b: &[bool]| a.iter().zip(b).all(|(x, y)| !*x || *y);
    for (i, c) in cols.iter().enumerate() {
        if !c.iter().any(|v| *v) {
            continue;
        }
        let absorbed = cols.iter().enumerate().any(|(j, o)| {
            j != i && subset(c, o) && (c != o || j < i)
        });
        if !absorbed {
            keep.push(c.clone());
        }
    }
    keep
}

/// Checks a letter display against a significance matrix.
pub fn letters_valid(letters: &[String], significant: &[Vec<bool>]) -> bool {
    let k = letters.len();
    for i in 0..k {
        for j in i + 1..k {
            let share = letters[i].chars().any(|c| letters[j].contains(c));
            if significant[i][j] == share {
                return false;
            }
        }
    }
    letters.iter().all(|l| !l.is_empty())
}
