//! Shared helpers for the integration suites.

#![allow(dead_code)]

use scribbleseg::rng::Rng;

/// Linear layer weights in `[in, out]` layout plus bias.
#[derive(Clone)]
pub struct RawLinear {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub fin: usize,
    pub fout: usize,
}

impl RawLinear {
    pub fn random(fin: usize, fout: usize, scale: f64, rng: &mut Rng) -> Self {
        RawLinear {
            w: (0..fin * fout).map(|_| rng.uniform(-scale, scale)).collect(),
            b: (0..fout).map(|_| rng.uniform(-scale, scale)).collect(),
            fin,
            fout,
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut w = vec![0.0; dim * dim];
        for i in 0..dim {
            w[i * dim + i] = 1.0;
        }
        RawLinear {
            w,
            b: vec![0.0; dim],
            fin: dim,
            fout: dim,
        }
    }

    pub fn zeros(fin: usize, fout: usize) -> Self {
        RawLinear {
            w: vec![0.0; fin * fout],
            b: vec![0.0; fout],
            fin,
            fout,
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.b.clone();
        for (k, &xv) in x.iter().enumerate() {
            for j in 0..self.fout {
                y[j] += xv * self.w[k * self.fout + j];
            }
        }
        y
    }
}

pub struct RawAttention {
    pub value: RawLinear,
    pub offset: RawLinear,
    pub weight: RawLinear,
    pub out: RawLinear,
}

/// Straightforward five-nested-loop deformable attention over pixels, heads,
/// levels, sampling points and channels. Independent of the tape engine:
/// plain loops, its own bilinear lookup, its own softmax.
pub fn naive_deformable_attention(
    m_f: &[f64], // [c, n_in]
    e: &[f64],   // [c, n_in]
    shapes: &[(usize, usize)],
    params: &RawAttention,
    c: usize,
    heads: usize,
    points: usize,
) -> Vec<f64> {
    let levels = shapes.len();
    let n_in: usize = shapes.iter().map(|&(h, w)| h * w).sum();
    let level_starts: Vec<usize> = shapes
        .iter()
        .scan(0usize, |acc, &(h, w)| {
            let s = *acc;
            *acc += h * w;
            Some(s)
        })
        .collect();
    let d = c / heads;
    let lp = levels * points;

    let column = |data: &[f64], n: usize| -> Vec<f64> { (0..c).map(|r| data[r * n_in + n]).collect() };

    // reference points at pixel centers, in flatten order
    let mut refs = Vec::with_capacity(n_in * 2);
    for &(h, w) in shapes {
        for y in 0..h {
            for x in 0..w {
                refs.push((x as f64 + 0.5) / w as f64);
                refs.push((y as f64 + 0.5) / h as f64);
            }
        }
    }

    // value feature per pixel row
    let values: Vec<Vec<f64>> = (0..n_in).map(|n| params.value.apply(&column(m_f, n))).collect();

    let lookup = |level: usize, head: usize, ch: usize, px: f64, py: f64| -> f64 {
        let (h, w) = shapes[level];
        let u = px * w as f64 - 0.5;
        let v = py * h as f64 - 0.5;
        let x0 = u.floor();
        let y0 = v.floor();
        let fx = u - x0;
        let fy = v - y0;
        let mut acc = 0.0;
        for (dy, wy) in [(0i64, 1.0 - fy), (1, fy)] {
            for (dx, wx) in [(0i64, 1.0 - fx), (1, fx)] {
                let xx = x0 as i64 + dx;
                let yy = y0 as i64 + dy;
                if xx >= 0 && yy >= 0 && (xx as usize) < w && (yy as usize) < h {
                    let row = level_starts[level] + yy as usize * w + xx as usize;
                    acc += wy * wx * values[row][head * d + ch];
                }
            }
        }
        acc
    };

    let mut out = vec![0.0; c * n_in];
    for n in 0..n_in {
        let mut q = column(m_f, n);
        for (qi, ei) in q.iter_mut().zip(column(e, n)) {
            *qi += ei;
        }
        let off = params.offset.apply(&q);
        let logits = params.weight.apply(&q);

        let mut o_s = vec![0.0; c];
        for hd in 0..heads {
            // softmax over the fused (level, point) axis
            let row = &logits[hd * lp..(hd + 1) * lp];
            let maxv = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = row.iter().map(|&v| (v - maxv).exp()).collect();
            let denom: f64 = exps.iter().sum();
            for l in 0..levels {
                for p in 0..points {
                    let idx = (hd * levels + l) * points + p;
                    let wgt = exps[l * points + p] / denom;
                    let px = refs[2 * n] + off[idx * 2];
                    let py = refs[2 * n + 1] + off[idx * 2 + 1];
                    for ch in 0..d {
                        o_s[hd * d + ch] += wgt * lookup(l, hd, ch, px, py);
                    }
                }
            }
        }
        let o_da = params.out.apply(&o_s);
        for (r, &v) in o_da.iter().enumerate() {
            out[r * n_in + n] = v;
        }
    }
    out
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}
