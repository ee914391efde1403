//! Sparse symmetric-indefinite LDLᵀ with static 1×1 and 2×2 pivots.
//!
//! The caller groups scalar indices into pivot nodes of size one or two
//! before analysis. Pairing each constraint row with a variable that
//! appears in it turns the zero diagonal of a saddle-point system into
//! nonsingular 2×2 pivots, so no dynamic pivoting is needed. Nodes are
//! ordered by approximate minimum degree, then factored with an up-looking
//! algorithm over the node elimination tree. Every block is stored as a
//! padded 2×2 column-major array; padding stays zero throughout.

use crate::error::{Error, Result};

const NONE: usize = usize::MAX;

type Block = [f64; 4];

#[inline]
fn mul(a: &Block, b: &Block) -> Block {
    [
        a[0] * b[0] + a[2] * b[1],
        a[1] * b[0] + a[3] * b[1],
        a[0] * b[2] + a[2] * b[3],
        a[1] * b[2] + a[3] * b[3],
    ]
}

/// `aᵀ b`
#[inline]
fn tmul(a: &Block, b: &Block) -> Block {
    [
        a[0] * b[0] + a[1] * b[1],
        a[2] * b[0] + a[3] * b[1],
        a[0] * b[2] + a[1] * b[3],
        a[2] * b[2] + a[3] * b[3],
    ]
}

#[inline]
fn sub_assign(a: &mut Block, b: &Block) {
    for k in 0..4 {
        a[k] -= b[k];
    }
}

/// Signs of the pivots, equal to the inertia of the factored matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Inertia {
    pub positive: usize,
    pub negative: usize,
    pub zero: usize,
}

/// Pivot magnitudes at or below this are reported as zero.
pub const ZERO_PIVOT: f64 = 1e-24;

#[derive(Debug, Clone)]
pub struct BlockLdl {
    n: usize,
    /// Per permuted node: size and original scalar members.
    size: Vec<usize>,
    members: Vec<[usize; 2]>,
    // Upper block CSC of the permuted matrix; diagonal block first in each column.
    ap: Vec<usize>,
    ai: Vec<usize>,
    ax: Vec<Block>,
    /// For each input entry: flat position in `ax` and optional mirror.
    entry_pos: Vec<(usize, usize)>,
    etree: Vec<usize>,
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<Block>,
    d: Vec<Block>,
    dinv: Vec<Block>,
}

impl BlockLdl {
    /// Symbolic analysis of an `n × n` symmetric pattern given as entries
    /// `(i, j)`, each unordered pair listed at most once per intended
    /// contribution (duplicates are summed). `pairs` lists index pairs that
    /// form 2×2 pivots; the remaining indices are 1×1 pivots. Diagonal
    /// blocks are always present.
    pub fn analyze(n: usize, entries: &[(usize, usize)], pairs: &[(usize, usize)]) -> Result<Self> {
        let mut node_of = vec![NONE; n];
        let mut local = vec![0usize; n];
        let mut nodes: Vec<([usize; 2], usize)> = Vec::with_capacity(n);
        for &(a, b) in pairs {
            if a >= n || b >= n || a == b || node_of[a] != NONE || node_of[b] != NONE {
                return Err(Error::Mismatch(format!("invalid pivot pair ({a}, {b})")));
            }
            node_of[a] = nodes.len();
            node_of[b] = nodes.len();
            local[b] = 1;
            nodes.push(([a, b], 2));
        }
        for i in 0..n {
            if node_of[i] == NONE {
                node_of[i] = nodes.len();
                nodes.push(([i, 0], 1));
            }
        }
        let nn = nodes.len();

        // Node adjacency (upper, unpermuted) for the ordering.
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); nn];
        for &(i, j) in entries {
            if i >= n || j >= n {
                return Err(Error::Mismatch(format!("entry ({i}, {j}) out of range {n}")));
            }
            let (a, b) = (node_of[i], node_of[j]);
            let (r, c) = if a <= b { (a, b) } else { (b, a) };
            adj[c].push(r);
        }
        for (c, col) in adj.iter_mut().enumerate() {
            col.push(c);
            col.sort_unstable();
            col.dedup();
        }
        let mut cp = vec![0usize; nn + 1];
        for c in 0..nn {
            cp[c + 1] = cp[c] + adj[c].len();
        }
        let ci: Vec<usize> = adj.iter().flatten().copied().collect();
        let (perm, pinv) = if nn == 0 {
            (Vec::new(), Vec::new())
        } else {
            let (p, pinv, _) = amd::order(nn, &cp, &ci, &amd::Control::default())
                .map_err(|s| Error::Mismatch(format!("ordering failed: {s:?}")))?;
            (p, pinv)
        };

        // Permuted pattern.
        let mut cols: Vec<Vec<usize>> = vec![Vec::new(); nn];
        for (c, col) in adj.iter().enumerate() {
            for &r in col {
                let (pr, pc) = (pinv[r], pinv[c]);
                let (row, column) = if pr <= pc { (pr, pc) } else { (pc, pr) };
                cols[column].push(row);
            }
        }
        let mut ap = vec![0usize; nn + 1];
        let mut ai = Vec::new();
        for (c, col) in cols.iter_mut().enumerate() {
            col.sort_unstable();
            col.dedup();
            // Diagonal first, then strictly upper rows.
            ai.push(c);
            ai.extend(col.iter().copied().filter(|&r| r != c));
            ap[c + 1] = ai.len();
        }
        let find = |row: usize, col: usize| -> usize {
            let s = &ai[ap[col]..ap[col + 1]];
            if row == col {
                ap[col]
            } else {
                ap[col] + 1 + s[1..].binary_search(&row).expect("pattern entry")
            }
        };
        let mut entry_pos = Vec::with_capacity(entries.len());
        for &(i, j) in entries {
            let (ni, nj) = (pinv[node_of[i]], pinv[node_of[j]]);
            let (li_, lj) = (local[i], local[j]);
            let pos = if ni < nj {
                (find(ni, nj) * 4 + li_ + 2 * lj, NONE)
            } else if ni > nj {
                (find(nj, ni) * 4 + lj + 2 * li_, NONE)
            } else {
                let b = find(ni, ni) * 4;
                if li_ == lj {
                    (b + li_ + 2 * lj, NONE)
                } else {
                    (b + li_ + 2 * lj, b + lj + 2 * li_)
                }
            };
            entry_pos.push(pos);
        }
        let size = perm.iter().map(|&o| nodes[o].1).collect();
        let members = perm.iter().map(|&o| nodes[o].0).collect();

        // Elimination tree and column counts of L.
        let mut etree = vec![NONE; nn];
        let mut lnz = vec![0usize; nn];
        let mut work = vec![NONE; nn];
        for j in 0..nn {
            work[j] = j;
            for &r in &ai[ap[j] + 1..ap[j + 1]] {
                let mut i = r;
                while work[i] != j {
                    if etree[i] == NONE {
                        etree[i] = j;
                    }
                    lnz[i] += 1;
                    work[i] = j;
                    i = etree[i];
                }
            }
        }
        let mut lp = vec![0usize; nn + 1];
        for i in 0..nn {
            lp[i + 1] = lp[i] + lnz[i];
        }
        let total = lp[nn];
        let nblocks = ai.len();
        Ok(Self {
            n,
            size,
            members,
            ap,
            ai,
            ax: vec![[0.0; 4]; nblocks],
            entry_pos,
            etree,
            lp,
            li: vec![0; total],
            lx: vec![[0.0; 4]; total],
            d: vec![[0.0; 4]; nn],
            dinv: vec![[0.0; 4]; nn],
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Nonzero blocks in the factor, a proxy for fill.
    pub fn factor_blocks(&self) -> usize {
        self.lp[self.lp.len() - 1]
    }

    /// Numeric factorization of the matrix whose entries (in the order
    /// given to [`BlockLdl::analyze`]) are `values`.
    pub fn factor(&mut self, values: &[f64]) -> Inertia {
        assert_eq!(values.len(), self.entry_pos.len());
        for b in self.ax.iter_mut() {
            *b = [0.0; 4];
        }
        for (&(p, m), &v) in self.entry_pos.iter().zip(values) {
            self.ax[p / 4][p % 4] += v;
            if m != NONE {
                self.ax[m / 4][m % 4] += v;
            }
        }
        let nn = self.size.len();
        let mut y = vec![[0.0; 4]; nn];
        let mut marked = vec![false; nn];
        let mut next = self.lp[..nn].to_vec();
        let mut reach = Vec::with_capacity(nn);
        let mut stack = Vec::new();
        let mut inertia = Inertia::default();
        for k in 0..nn {
            reach.clear();
            self.d[k] = self.ax[self.ap[k]];
            for p in self.ap[k] + 1..self.ap[k + 1] {
                let b = self.ai[p];
                y[b] = self.ax[p];
                if marked[b] {
                    continue;
                }
                marked[b] = true;
                stack.clear();
                stack.push(b);
                let mut i = self.etree[b];
                while i != NONE && i < k && !marked[i] {
                    marked[i] = true;
                    stack.push(i);
                    i = self.etree[i];
                }
                while let Some(s) = stack.pop() {
                    reach.push(s);
                }
            }
            for &c in reach.iter().rev() {
                let yc = y[c];
                for j in self.lp[c]..next[c] {
                    let upd = mul(&self.lx[j], &yc);
                    sub_assign(&mut y[self.li[j]], &upd);
                }
                let lkc = tmul(&yc, &self.dinv[c]);
                let upd = mul(&lkc, &yc);
                sub_assign(&mut self.d[k], &upd);
                self.li[next[c]] = k;
                self.lx[next[c]] = lkc;
                next[c] += 1;
                y[c] = [0.0; 4];
                marked[c] = false;
            }
            let (inv, pos, neg, zero) = invert(&self.d[k], self.size[k]);
            self.dinv[k] = inv;
            inertia.positive += pos;
            inertia.negative += neg;
            inertia.zero += zero;
        }
        inertia
    }

    /// Solves `A x = b` in place using the last factorization.
    pub fn solve(&self, b: &mut [f64]) {
        let nn = self.size.len();
        let mut z = vec![[0.0; 4]; nn];
        for k in 0..nn {
            for l in 0..self.size[k] {
                z[k][l] = b[self.members[k][l]];
            }
        }
        for c in 0..nn {
            let zc = z[c];
            for j in self.lp[c]..self.lp[c + 1] {
                let l = &self.lx[j];
                let r = &mut z[self.li[j]];
                r[0] -= l[0] * zc[0] + l[2] * zc[1];
                r[1] -= l[1] * zc[0] + l[3] * zc[1];
            }
        }
        for c in 0..nn {
            let (d, v) = (&self.dinv[c], z[c]);
            z[c] = [d[0] * v[0] + d[2] * v[1], d[1] * v[0] + d[3] * v[1], 0.0, 0.0];
        }
        for c in (0..nn).rev() {
            let mut acc = z[c];
            for j in self.lp[c]..self.lp[c + 1] {
                let l = &self.lx[j];
                let r = &z[self.li[j]];
                acc[0] -= l[0] * r[0] + l[1] * r[1];
                acc[1] -= l[2] * r[0] + l[3] * r[1];
            }
            z[c] = acc;
        }
        for k in 0..nn {
            for l in 0..self.size[k] {
                b[self.members[k][l]] = z[k][l];
            }
        }
    }
}

/// Inverse and pivot signs of a 1×1 or 2×2 diagonal block.
fn invert(d: &Block, size: usize) -> (Block, usize, usize, usize) {
    if size == 1 {
        let a = d[0];
        if a.abs() <= ZERO_PIVOT || !a.is_finite() {
            return ([0.0; 4], 0, 0, 1);
        }
        return ([1.0 / a, 0.0, 0.0, 0.0], (a > 0.0) as usize, (a < 0.0) as usize, 0);
    }
    let (a, b, c) = (d[0], 0.5 * (d[1] + d[2]), d[3]);
    let det = a * c - b * b;
    let m = 0.5 * (a + c);
    let r = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    let big = if m >= 0.0 { m + r } else { m - r };
    let small = if big != 0.0 { det / big } else { 0.0 };
    let zeros = [big, small].iter().filter(|v| v.abs() <= ZERO_PIVOT || !v.is_finite()).count();
    if zeros > 0 {
        let pos = [big, small].iter().filter(|v| v.abs() > ZERO_PIVOT && **v > 0.0).count();
        let neg = [big, small].iter().filter(|v| v.abs() > ZERO_PIVOT && **v < 0.0).count();
        return ([0.0; 4], pos, neg, zeros);
    }
    let pos = (big > 0.0) as usize + (small > 0.0) as usize;
    ([c / det, -b / det, -b / det, a / det], pos, 2 - pos, 0)
}

/// `y = A x` for a symmetric matrix given by entries as in
/// [`BlockLdl::analyze`] (each unordered pair once).
pub fn sym_mul(entries: &[(usize, usize)], values: &[f64], x: &[f64], y: &mut [f64]) {
    y.fill(0.0);
    for (&(i, j), &v) in entries.iter().zip(values) {
        y[i] += v * x[j];
        if i != j {
            y[j] += v * x[i];
        }
    }
}
