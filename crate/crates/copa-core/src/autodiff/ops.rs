//! Forward op constructors and their reverse rules.

use super::tape::{Op, Shape, Tape, TapeError, Var};

/// `out += A' * B'` where each operand is optionally transposed.
/// `a` has logical shape `(m, k)` after transposition, `b` is `(k, n)`.
pub(crate) fn matmul_acc(
    out: &mut [f64],
    a: &[f64],
    a_shape: Shape,
    ta: bool,
    b: &[f64],
    b_shape: Shape,
    tb: bool,
) {
    let (m, k) = if ta { (a_shape.1, a_shape.0) } else { a_shape };
    let n = if tb { b_shape.0 } else { b_shape.1 };
    match (ta, tb) {
        (false, false) => {
            // C_ij += sum_p A_ip B_pj : stream rows of B.
            for i in 0..m {
                let arow = &a[i * k..(i + 1) * k];
                let crow = &mut out[i * n..(i + 1) * n];
                for (p, &aip) in arow.iter().enumerate() {
                    if aip == 0.0 {
                        continue;
                    }
                    let brow = &b[p * n..(p + 1) * n];
                    for j in 0..n {
                        crow[j] += aip * brow[j];
                    }
                }
            }
        }
        (false, true) => {
            // C_ij += dot(A_i, B_j); both row-major rows.
            for i in 0..m {
                let arow = &a[i * k..(i + 1) * k];
                for j in 0..n {
                    let brow = &b[j * k..(j + 1) * k];
                    let mut s = 0.0;
                    for p in 0..k {
                        s += arow[p] * brow[p];
                    }
                    out[i * n + j] += s;
                }
            }
        }
        (true, false) => {
            // C_ij += sum_p A_pi B_pj : rank-1 updates from paired rows.
            for p in 0..k {
                let arow = &a[p * m..(p + 1) * m];
                let brow = &b[p * n..(p + 1) * n];
                for i in 0..m {
                    let api = arow[i];
                    if api == 0.0 {
                        continue;
                    }
                    let crow = &mut out[i * n..(i + 1) * n];
                    for j in 0..n {
                        crow[j] += api * brow[j];
                    }
                }
            }
        }
        (true, true) => {
            for i in 0..m {
                for j in 0..n {
                    let mut s = 0.0;
                    for p in 0..k {
                        s += a[p * m + i] * b[j * b_shape.1 + p];
                    }
                    out[i * n + j] += s;
                }
            }
        }
    }
}

impl Tape {
    fn logical(&self, v: Var, t: bool) -> Shape {
        let (r, c) = self.shape(v);
        if t {
            (c, r)
        } else {
            (r, c)
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TapeError> {
        self.matmul_t(a, false, b, false)
    }

    /// Matrix product with optional transposes on either operand.
    pub fn matmul_t(&mut self, a: Var, ta: bool, b: Var, tb: bool) -> Result<Var, TapeError> {
        let (m, ka) = self.logical(a, ta);
        let (kb, n) = self.logical(b, tb);
        if ka != kb {
            return Err(TapeError::ShapeMismatch {
                op: "matmul",
                detail: format!("inner dims {ka} vs {kb}"),
            });
        }
        let mut out = vec![0.0; m * n];
        matmul_acc(
            &mut out,
            self.values(a),
            self.shape(a),
            ta,
            self.values(b),
            self.shape(b),
            tb,
        );
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push((m, n), out, rg, Op::Matmul { a: a.0, b: b.0, ta, tb }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TapeError> {
        let sa = self.shape(a);
        let sb = self.shape(b);
        if sa == sb {
            let out: Vec<f64> = self
                .values(a)
                .iter()
                .zip(self.values(b))
                .map(|(x, y)| x + y)
                .collect();
            let rg = self.requires(a) || self.requires(b);
            Ok(self.push(sa, out, rg, Op::Add { a: a.0, b: b.0 }))
        } else if sb.0 == 1 && sa.1 == sb.1 {
            let (n, d) = sa;
            let bv = self.values(b);
            let mut out = Vec::with_capacity(n * d);
            for i in 0..n {
                let arow = &self.values(a)[i * d..(i + 1) * d];
                for j in 0..d {
                    out.push(arow[j] + bv[j]);
                }
            }
            let rg = self.requires(a) || self.requires(b);
            Ok(self.push(sa, out, rg, Op::AddRow { a: a.0, b: b.0 }))
        } else {
            Err(TapeError::ShapeMismatch {
                op: "add",
                detail: format!("{sa:?} vs {sb:?}"),
            })
        }
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TapeError> {
        let nb = self.scale(b, -1.0);
        self.add(a, nb)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TapeError> {
        let sa = self.shape(a);
        if sa != self.shape(b) {
            return Err(TapeError::ShapeMismatch {
                op: "mul",
                detail: format!("{:?} vs {:?}", sa, self.shape(b)),
            });
        }
        let out: Vec<f64> = self
            .values(a)
            .iter()
            .zip(self.values(b))
            .map(|(x, y)| x * y)
            .collect();
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(sa, out, rg, Op::Mul { a: a.0, b: b.0 }))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let out: Vec<f64> = self.values(a).iter().map(|x| x * k).collect();
        let rg = self.requires(a);
        self.push(self.shape(a), out, rg, Op::Scale { a: a.0, k })
    }

    pub fn add_scalar(&mut self, a: Var, k: f64) -> Var {
        let out: Vec<f64> = self.values(a).iter().map(|x| x + k).collect();
        let rg = self.requires(a);
        self.push(self.shape(a), out, rg, Op::AddScalar { a: a.0 })
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var, TapeError> {
        assert!(!parts.is_empty() && axis < 2);
        let first = self.shape(parts[0]);
        let mut rows = first.0;
        let mut cols = first.1;
        for &p in &parts[1..] {
            let s = self.shape(p);
            if axis == 0 {
                if s.1 != cols {
                    return Err(TapeError::ShapeMismatch {
                        op: "concat",
                        detail: format!("col mismatch {} vs {}", s.1, cols),
                    });
                }
                rows += s.0;
            } else {
                if s.0 != rows {
                    return Err(TapeError::ShapeMismatch {
                        op: "concat",
                        detail: format!("row mismatch {} vs {}", s.0, rows),
                    });
                }
                cols += s.1;
            }
        }
        let mut out = Vec::with_capacity(rows * cols);
        if axis == 0 {
            for &p in parts {
                out.extend_from_slice(self.values(p));
            }
        } else {
            for r in 0..rows {
                for &p in parts {
                    let w = self.shape(p).1;
                    out.extend_from_slice(&self.values(p)[r * w..(r + 1) * w]);
                }
            }
        }
        let rg = parts.iter().any(|&p| self.requires(p));
        let part_ids = parts.iter().map(|p| p.0).collect();
        Ok(self.push((rows, cols), out, rg, Op::Concat { parts: part_ids, axis }))
    }

    pub fn slice(&mut self, a: Var, start: usize, len: usize, axis: usize) -> Result<Var, TapeError> {
        let (r, c) = self.shape(a);
        let bound = if axis == 0 { r } else { c };
        if start + len > bound {
            return Err(TapeError::ShapeMismatch {
                op: "slice",
                detail: format!("range {start}+{len} exceeds {bound}"),
            });
        }
        let (rows, cols) = if axis == 0 { (len, c) } else { (r, len) };
        let mut out = Vec::with_capacity(rows * cols);
        if axis == 0 {
            out.extend_from_slice(&self.values(a)[start * c..(start + len) * c]);
        } else {
            for i in 0..r {
                out.extend_from_slice(&self.values(a)[i * c + start..i * c + start + len]);
            }
        }
        let rg = self.requires(a);
        Ok(self.push((rows, cols), out, rg, Op::Slice { a: a.0, start, len, axis }))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s: f64 = self.values(a).iter().sum();
        let rg = self.requires(a);
        self.push((1, 1), vec![s], rg, Op::Sum { a: a.0 })
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let vals = self.values(a);
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        let rg = self.requires(a);
        self.push((1, 1), vec![m], rg, Op::Mean { a: a.0 })
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.max(0.0), |a| Op::Relu { a })
    }

    pub fn elu(&mut self, a: Var) -> Var {
        self.unary(a, |x| if x > 0.0 { x } else { x.exp() - 1.0 }, |a| Op::Elu { a })
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, |x| 1.0 / (1.0 + (-x).exp()), |a| Op::Sigmoid { a })
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, |a| Op::Tanh { a })
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, f64::exp, |a| Op::Exp { a })
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, f64::ln, |a| Op::Log { a })
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, |x| x * x, |a| Op::Square { a })
    }

    /// Hard clamp to `[lo, hi]`, built from relu so the gradient is exactly
    /// 1 inside the interval and 0 outside.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let shifted = self.add_scalar(a, -lo);
        let low = self.relu(shifted);
        let over = self.add_scalar(low, lo - hi);
        let over = self.relu(over);
        let neg = self.scale(over, -1.0);
        let capped = self.add(low, neg).expect("same shape");
        self.add_scalar(capped, lo)
    }

    /// `|x|` as `relu(x) + relu(-x)`.
    pub fn abs(&mut self, a: Var) -> Var {
        let p = self.relu(a);
        let n = self.scale(a, -1.0);
        let n = self.relu(n);
        self.add(p, n).expect("same shape")
    }

    /// Row-wise softmax restricted to entries with `mask != 0`; masked
    /// entries get probability exactly 0. Every row needs at least one
    /// unmasked entry.
    pub fn softmax_masked(&mut self, a: Var, mask: &[f64]) -> Result<Var, TapeError> {
        let (n, d) = self.shape(a);
        if mask.len() != n * d {
            return Err(TapeError::ShapeMismatch {
                op: "softmax_masked",
                detail: format!("mask len {} vs {}", mask.len(), n * d),
            });
        }
        let vals = self.values(a);
        let mut out = vec![0.0; n * d];
        for i in 0..n {
            let row = &vals[i * d..(i + 1) * d];
            let mrow = &mask[i * d..(i + 1) * d];
            let mut mx = f64::NEG_INFINITY;
            for j in 0..d {
                if mrow[j] != 0.0 && row[j] > mx {
                    mx = row[j];
                }
            }
            if mx == f64::NEG_INFINITY {
                return Err(TapeError::FullyMaskedRow { row: i });
            }
            let mut z = 0.0;
            for j in 0..d {
                if mrow[j] != 0.0 {
                    let e = (row[j] - mx).exp();
                    out[i * d + j] = e;
                    z += e;
                }
            }
            for j in 0..d {
                out[i * d + j] /= z;
            }
        }
        let rg = self.requires(a);
        Ok(self.push((n, d), out, rg, Op::SoftmaxMasked { a: a.0, mask: mask.to_vec() }))
    }

    /// Standard GRU cell, batched over rows. `x` is `[n, d_in]`, `h` is
    /// `[n, d_h]`; weight layout follows the update/reset/candidate gates:
    /// z = σ(xWz + hUz + bz), r = σ(xWr + hUr + br),
    /// n̂ = tanh(xWn + (r∘h)Un + bn), h' = (1−z)∘h + z∘n̂.
    #[allow(clippy::too_many_arguments)]
    pub fn gru_cell(
        &mut self,
        x: Var,
        h: Var,
        wz: Var,
        uz: Var,
        bz: Var,
        wr: Var,
        ur: Var,
        br: Var,
        wn: Var,
        un: Var,
        bn: Var,
    ) -> Result<Var, TapeError> {
        let xz = self.matmul(x, wz)?;
        let hz = self.matmul(h, uz)?;
        let zi = self.add(xz, hz)?;
        let zi = self.add(zi, bz)?;
        let z = self.sigmoid(zi);

        let xr = self.matmul(x, wr)?;
        let hr = self.matmul(h, ur)?;
        let ri = self.add(xr, hr)?;
        let ri = self.add(ri, br)?;
        let r = self.sigmoid(ri);

        let rh = self.mul(r, h)?;
        let xn = self.matmul(x, wn)?;
        let hn = self.matmul(rh, un)?;
        let ni = self.add(xn, hn)?;
        let ni = self.add(ni, bn)?;
        let cand = self.tanh(ni);

        let zh = self.mul(z, cand)?;
        let one_minus_z = self.scale(z, -1.0);
        let one_minus_z = self.add_scalar(one_minus_z, 1.0);
        let keep = self.mul(one_minus_z, h)?;
        self.add(keep, zh)
    }

    fn requires(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: impl Fn(usize) -> Op) -> Var {
        let out: Vec<f64> = self.values(a).iter().map(|&x| f(x)).collect();
        let rg = self.requires(a);
        self.push(self.shape(a), out, rg, op(a.0))
    }

    pub(crate) fn backprop_node(&mut self, i: usize) {
        let op = self.nodes[i].op.clone();
        let g = match std::mem::take(&mut self.nodes[i].grad) {
            Some(g) => g,
            None => return,
        };
        match op {
            Op::Leaf => {}
            Op::Matmul { a, b, ta, tb } => {
                let (gr, gc) = self.nodes[i].shape;
                let a_shape = self.nodes[a].shape;
                let b_shape = self.nodes[b].shape;
                if self.nodes[a].requires_grad {
                    let mut da = vec![0.0; a_shape.0 * a_shape.1];
                    // dA for each transpose case.
                    match (ta, tb) {
                        (false, false) => matmul_acc(&mut da, &g, (gr, gc), false, &self.nodes[b].values, b_shape, true),
                        (false, true) => matmul_acc(&mut da, &g, (gr, gc), false, &self.nodes[b].values, b_shape, false),
                        (true, false) => matmul_acc(&mut da, &self.nodes[b].values, b_shape, false, &g, (gr, gc), true),
                        (true, true) => matmul_acc(&mut da, &self.nodes[b].values, b_shape, true, &g, (gr, gc), true),
                    }
                    add_into(self.ensure_grad(a), &da);
                }
                if self.nodes[b].requires_grad {
                    let mut db = vec![0.0; b_shape.0 * b_shape.1];
                    match (ta, tb) {
                        (false, false) => matmul_acc(&mut db, &self.nodes[a].values, a_shape, true, &g, (gr, gc), false),
                        (false, true) => matmul_acc(&mut db, &g, (gr, gc), true, &self.nodes[a].values, a_shape, false),
                        (true, false) => matmul_acc(&mut db, &self.nodes[a].values, a_shape, false, &g, (gr, gc), false),
                        (true, true) => matmul_acc(&mut db, &g, (gr, gc), true, &self.nodes[a].values, a_shape, true),
                    }
                    add_into(self.ensure_grad(b), &db);
                }
            }
            Op::Add { a, b } => {
                if self.nodes[a].requires_grad {
                    add_into(self.ensure_grad(a), &g);
                }
                if self.nodes[b].requires_grad {
                    add_into(self.ensure_grad(b), &g);
                }
            }
            Op::AddRow { a, b } => {
                if self.nodes[a].requires_grad {
                    add_into(self.ensure_grad(a), &g);
                }
                if self.nodes[b].requires_grad {
                    let d = self.nodes[b].shape.1;
                    let gb = self.ensure_grad(b);
                    for (j, &gv) in g.iter().enumerate() {
                        gb[j % d] += gv;
                    }
                }
            }
            Op::Mul { a, b } => {
                if self.nodes[a].requires_grad {
                    let contrib: Vec<f64> = g.iter().zip(&self.nodes[b].values).map(|(gv, bv)| gv * bv).collect();
                    add_into(self.ensure_grad(a), &contrib);
                }
                if self.nodes[b].requires_grad {
                    let contrib: Vec<f64> = g.iter().zip(&self.nodes[a].values).map(|(gv, av)| gv * av).collect();
                    add_into(self.ensure_grad(b), &contrib);
                }
            }
            Op::Scale { a, k } => {
                if self.nodes[a].requires_grad {
                    let contrib: Vec<f64> = g.iter().map(|gv| gv * k).collect();
                    add_into(self.ensure_grad(a), &contrib);
                }
            }
            Op::AddScalar { a } => {
                if self.nodes[a].requires_grad {
                    add_into(self.ensure_grad(a), &g);
                }
            }
            Op::Concat { ref parts, axis } => {
                let (_, cols) = self.nodes[i].shape;
                if axis == 0 {
                    let mut offset = 0;
                    for &p in parts {
                        let len = self.nodes[p].values.len();
                        if self.nodes[p].requires_grad {
                            add_into(self.ensure_grad(p), &g[offset..offset + len]);
                        }
                        offset += len;
                    }
                } else {
                    let rows = self.nodes[i].shape.0;
                    let mut col0 = 0;
                    for &p in parts {
                        let w = self.nodes[p].shape.1;
                        if self.nodes[p].requires_grad {
                            let gp = self.ensure_grad(p);
                            for r in 0..rows {
                                for j in 0..w {
                                    gp[r * w + j] += g[r * cols + col0 + j];
                                }
                            }
                        }
                        col0 += w;
                    }
                }
            }
            Op::Slice { a, start, len, axis } => {
                if self.nodes[a].requires_grad {
                    let (_, ac) = self.nodes[a].shape;
                    let (or, oc) = self.nodes[i].shape;
                    let ga = self.ensure_grad(a);
                    if axis == 0 {
                        add_into(&mut ga[start * ac..(start + len) * ac], &g);
                    } else {
                        for r in 0..or {
                            for j in 0..oc {
                                ga[r * ac + start + j] += g[r * oc + j];
                            }
                        }
                    }
                }
            }
            Op::Sum { a } => {
                if self.nodes[a].requires_grad {
                    let gv = g[0];
                    let ga = self.ensure_grad(a);
                    for x in ga.iter_mut() {
                        *x += gv;
                    }
                }
            }
            Op::Mean { a } => {
                if self.nodes[a].requires_grad {
                    let n = self.nodes[a].values.len() as f64;
                    let gv = g[0] / n;
                    let ga = self.ensure_grad(a);
                    for x in ga.iter_mut() {
                        *x += gv;
                    }
                }
            }
            Op::Relu { a } => self.unary_back(a, &g, i, |x, _y| if x > 0.0 { 1.0 } else { 0.0 }),
            Op::Elu { a } => self.unary_back(a, &g, i, |x, y| if x > 0.0 { 1.0 } else { y + 1.0 }),
            Op::Sigmoid { a } => self.unary_back(a, &g, i, |_x, y| y * (1.0 - y)),
            Op::Tanh { a } => self.unary_back(a, &g, i, |_x, y| 1.0 - y * y),
            Op::Exp { a } => self.unary_back(a, &g, i, |_x, y| y),
            Op::Log { a } => self.unary_back(a, &g, i, |x, _y| 1.0 / x),
            Op::Square { a } => self.unary_back(a, &g, i, |x, _y| 2.0 * x),
            Op::SoftmaxMasked { a, ref mask } => {
                if self.nodes[a].requires_grad {
                    let (n, d) = self.nodes[i].shape;
                    let s = &self.nodes[i].values;
                    let mut contrib = vec![0.0; n * d];
                    for r in 0..n {
                        let mut dot = 0.0;
                        for j in 0..d {
                            dot += s[r * d + j] * g[r * d + j];
                        }
                        for j in 0..d {
                            if mask[r * d + j] != 0.0 {
                                contrib[r * d + j] = s[r * d + j] * (g[r * d + j] - dot);
                            }
                        }
                    }
                    add_into(self.ensure_grad(a), &contrib);
                }
            }
        }
        self.nodes[i].grad = Some(g);
    }

    fn unary_back(&mut self, a: usize, g: &[f64], i: usize, df: impl Fn(f64, f64) -> f64) {
        if !self.nodes[a].requires_grad {
            return;
        }
        let contrib: Vec<f64> = g
            .iter()
            .zip(self.nodes[a].values.iter().zip(&self.nodes[i].values))
            .map(|(gv, (&x, &y))| gv * df(x, y))
            .collect();
        add_into(self.ensure_grad(a), &contrib);
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}
