//! Small exact linear algebra and graph helpers.

#![allow(clippy::needless_range_loop)]

use num_traits::{One, Zero};

use crate::belief::Rational;

/// Solves `a x = b` by Gaussian elimination over the rationals. Returns `None`
/// when the system has no unique solution.
pub fn solve(mut a: Vec<Vec<Rational>>, mut b: Vec<Rational>) -> Option<Vec<Rational>> {
    let n = b.len();
    if a.len() != n || a.iter().any(|row| row.len() != n) {
        return None;
    }
    for col in 0..n {
        let pivot = (col..n).find(|&r| !a[r][col].is_zero())?;
        a.swap(col, pivot);
        b.swap(col, pivot);
        let inv = Rational::one() / &a[col][col];
        for k in col..n {
            a[col][k] = &a[col][k] * &inv;
        }
        b[col] = &b[col] * &inv;
        for r in 0..n {
            if r == col || a[r][col].is_zero() {
                continue;
            }
            let factor = a[r][col].clone();
            for k in col..n {
                let delta = &factor * &a[col][k];
                a[r][k] -= delta;
            }
            let delta = &factor * &b[col];
            b[r] -= delta;
        }
    }
    Some(b)
}

/// Least-squares-free exact solve of an over- or under-determined system
/// `sum_j x_j cols[j] = target`: finds the unique solution when the columns
/// are linearly independent and the system is consistent.
pub fn solve_columns(cols: &[Vec<Rational>], target: &[Rational]) -> Option<Vec<Rational>> {
    let m = cols.len();
    let rows = target.len();
    if m == 0 {
        return target.iter().all(Zero::is_zero).then(Vec::new);
    }
    // Row-reduce the augmented matrix [cols | target].
    let mut mat: Vec<Vec<Rational>> = (0..rows)
        .map(|r| {
            let mut row: Vec<Rational> = cols.iter().map(|c| c[r].clone()).collect();
            row.push(target[r].clone());
            row
        })
        .collect();
    let mut pivot_row = 0;
    let mut pivots = Vec::new();
    for col in 0..m {
        let p = (pivot_row..rows).find(|&r| !mat[r][col].is_zero())?;
        mat.swap(pivot_row, p);
        let inv = Rational::one() / &mat[pivot_row][col];
        for k in col..=m {
            mat[pivot_row][k] = &mat[pivot_row][k] * &inv;
        }
        for r in 0..rows {
            if r == pivot_row || mat[r][col].is_zero() {
                continue;
            }
            let factor = mat[r][col].clone();
            for k in col..=m {
                let delta = &factor * &mat[pivot_row][k];
                mat[r][k] -= delta;
            }
        }
        pivots.push(pivot_row);
        pivot_row += 1;
    }
    if mat[pivot_row..].iter().any(|row| !row[m].is_zero()) {
        return None;
    }
    Some(pivots.iter().map(|&r| mat[r][m].clone()).collect())
}

/// Strongly connected components in reverse topological order (sinks first).
pub fn tarjan_scc(succ: &[Vec<usize>]) -> Vec<Vec<usize>> {
    struct State<'a> {
        succ: &'a [Vec<usize>],
        index: Vec<Option<usize>>,
        low: Vec<usize>,
        on_stack: Vec<bool>,
        stack: Vec<usize>,
        next: usize,
        out: Vec<Vec<usize>>,
    }
    let n = succ.len();
    let mut st = State {
        succ,
        index: vec![None; n],
        low: vec![0; n],
        on_stack: vec![false; n],
        stack: Vec::new(),
        next: 0,
        out: Vec::new(),
    };
    // Iterative DFS to stay safe on long chains.
    for root in 0..n {
        if st.index[root].is_some() {
            continue;
        }
        let mut call: Vec<(usize, usize)> = vec![(root, 0)];
        st.index[root] = Some(st.next);
        st.low[root] = st.next;
        st.next += 1;
        st.stack.push(root);
        st.on_stack[root] = true;
        while let Some(&mut (v, ref mut i)) = call.last_mut() {
            if *i < st.succ[v].len() {
                let w = st.succ[v][*i];
                *i += 1;
                match st.index[w] {
                    None => {
                        st.index[w] = Some(st.next);
                        st.low[w] = st.next;
                        st.next += 1;
                        st.stack.push(w);
                        st.on_stack[w] = true;
                        call.push((w, 0));
                    }
                    Some(iw) if st.on_stack[w] => {
                        st.low[v] = st.low[v].min(iw);
                    }
                    Some(_) => {}
                }
            } else {
                call.pop();
                if let Some(&(parent, _)) = call.last() {
                    st.low[parent] = st.low[parent].min(st.low[v]);
                }
                if Some(st.low[v]) == st.index[v] {
                    let mut comp = Vec::new();
                    loop {
                        let w = st.stack.pop().expect("stack holds the component");
                        st.on_stack[w] = false;
                        comp.push(w);
                        if w == v {
                            break;
                        }
                    }
                    comp.sort_unstable();
                    st.out.push(comp);
                }
            }
        }
    }
    st.out
}
