//! Forward-mode input jets (value, directional first and second
//! derivatives) with a matching reverse pass over the parameters.

use arrayvec::ArrayVec;

use super::Mlp;
use crate::geometry::Point;

pub const MAX_DIRS: usize = 3;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct JetOutput {
    pub value: f64,
    pub d1: ArrayVec<f64, MAX_DIRS>,
    pub d2: ArrayVec<f64, MAX_DIRS>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct JetCotangent {
    pub value: f64,
    pub d1: [f64; MAX_DIRS],
    pub d2: [f64; MAX_DIRS],
}

/// Per-level activations and tangents, laid out `[dir][unit]`.
#[derive(Default)]
pub struct JetBuffers {
    a: Vec<Vec<f64>>,
    ad: Vec<Vec<f64>>,
    add: Vec<Vec<f64>>,
    zd: Vec<Vec<f64>>,
    zdd: Vec<Vec<f64>>,
    g: Vec<Vec<[f64; 4]>>,
    bar: [Vec<f64>; 3],
    bar_prev: [Vec<f64>; 3],
}

fn ensure(v: &mut Vec<Vec<f64>>, levels: usize) {
    if v.len() < levels {
        v.resize_with(levels, Vec::new);
    }
}

pub fn forward(net: &Mlp, x: Point, dirs: &[Point], second: bool, b: &mut JetBuffers) -> JetOutput {
    let k = dirs.len();
    assert!(k <= MAX_DIRS);
    let n = net.num_layers();
    for v in [&mut b.a, &mut b.ad, &mut b.add, &mut b.zd, &mut b.zdd] {
        ensure(v, n + 1);
    }
    if b.g.len() < n + 1 {
        b.g.resize_with(n + 1, Vec::new);
    }
    b.a[0].clear();
    b.a[0].extend_from_slice(&x);
    b.ad[0].clear();
    for d in dirs {
        b.ad[0].extend_from_slice(d);
    }
    b.add[0].clear();
    b.add[0].resize(3 * k, 0.0);
    let w0 = net.omega0;
    let scale = [1.0, w0, w0 * w0, w0 * w0 * w0];
    for l in 0..n {
        let (w, bias) = net.layer(l);
        let (fi, fo) = (net.sizes[l], net.sizes[l + 1]);
        let hidden = l + 1 < n;
        let (lo, hi) = b.a.split_at_mut(l + 1);
        let (a_in, a_out) = (&lo[l], &mut hi[0]);
        let (lo, hi) = b.ad.split_at_mut(l + 1);
        let (ad_in, ad_out) = (&lo[l], &mut hi[0]);
        let (lo, hi) = b.add.split_at_mut(l + 1);
        let (add_in, add_out) = (&lo[l], &mut hi[0]);
        let (zd, zdd, g) = (&mut b.zd[l + 1], &mut b.zdd[l + 1], &mut b.g[l + 1]);
        a_out.resize(fo, 0.0);
        ad_out.resize(k * fo, 0.0);
        add_out.resize(k * fo, 0.0);
        zd.resize(k * fo, 0.0);
        zdd.resize(k * fo, 0.0);
        g.resize(fo, [0.0; 4]);
        for o in 0..fo {
            let row = &w[o * fi..(o + 1) * fi];
            let dot = |v: &[f64]| row.iter().zip(v).fold(0.0, |acc, (a, b)| acc + a * b);
            let z = row.iter().zip(a_in).fold(bias[o], |acc, (a, b)| acc + a * b);
            for d in 0..k {
                zd[d * fo + o] = dot(&ad_in[d * fi..(d + 1) * fi]);
                zdd[d * fo + o] = if second { dot(&add_in[d * fi..(d + 1) * fi]) } else { 0.0 };
            }
            if hidden {
                let s = net.activation.derivatives(w0 * z);
                let gg = [s[0], s[1] * scale[1], s[2] * scale[2], s[3] * scale[3]];
                g[o] = gg;
                a_out[o] = gg[0];
                for d in 0..k {
                    let (t, tt) = (zd[d * fo + o], zdd[d * fo + o]);
                    ad_out[d * fo + o] = gg[1] * t;
                    add_out[d * fo + o] = gg[2] * t * t + gg[1] * tt;
                }
            } else {
                a_out[o] = z;
                for d in 0..k {
                    ad_out[d * fo + o] = zd[d * fo + o];
                    add_out[d * fo + o] = zdd[d * fo + o];
                }
            }
        }
    }
    let mut out = JetOutput { value: b.a[n][0], ..Default::default() };
    for d in 0..k {
        out.d1.push(b.ad[n][d]);
        if second {
            out.d2.push(b.add[n][d]);
        }
    }
    out
}

/// Reverse pass after [`forward`] on the same buffers.
pub fn backward(net: &Mlp, k: usize, second: bool, cot: &super::JetCotangent, grad: &mut [f64], b: &mut JetBuffers) {
    let n = net.num_layers();
    let [bar, bar_d, bar_dd] = &mut b.bar;
    let [prev, prev_d, prev_dd] = &mut b.bar_prev;
    // cotangents of the current level's activations
    bar.clear();
    bar.push(cot.value);
    bar_d.clear();
    bar_d.extend_from_slice(&cot.d1[..k]);
    bar_dd.clear();
    bar_dd.extend((0..k).map(|d| if second { cot.d2[d] } else { 0.0 }));
    for l in (0..n).rev() {
        let (w, _) = net.layer(l);
        let (fi, fo) = (net.sizes[l], net.sizes[l + 1]);
        if l + 1 < n {
            let (zd, zdd, g) = (&b.zd[l + 1], &b.zdd[l + 1], &b.g[l + 1]);
            for o in 0..fo {
                let gg = g[o];
                let mut zb = bar[o] * gg[1];
                for d in 0..k {
                    let (t, tt) = (zd[d * fo + o], zdd[d * fo + o]);
                    let (ab, abb) = (bar_d[d * fo + o], bar_dd[d * fo + o]);
                    zb += ab * gg[2] * t + abb * (gg[3] * t * t + gg[2] * tt);
                    bar_d[d * fo + o] = ab * gg[1] + 2.0 * abb * gg[2] * t;
                    bar_dd[d * fo + o] = abb * gg[1];
                }
                bar[o] = zb;
            }
        }
        let base = net.layer_offset(l);
        let (gw, gb) = grad[base..base + (fi + 1) * fo].split_at_mut(fi * fo);
        let (a_in, ad_in, add_in) = (&b.a[l], &b.ad[l], &b.add[l]);
        for o in 0..fo {
            gb[o] += bar[o];
            let grow = &mut gw[o * fi..(o + 1) * fi];
            for i in 0..fi {
                let mut s = bar[o] * a_in[i];
                for d in 0..k {
                    s += bar_d[d * fo + o] * ad_in[d * fi + i];
                    if second {
                        s += bar_dd[d * fo + o] * add_in[d * fi + i];
                    }
                }
                grow[i] += s;
            }
        }
        if l == 0 {
            break;
        }
        prev.clear();
        prev.resize(fi, 0.0);
        prev_d.clear();
        prev_d.resize(k * fi, 0.0);
        prev_dd.clear();
        prev_dd.resize(k * fi, 0.0);
        for o in 0..fo {
            let row = &w[o * fi..(o + 1) * fi];
            for i in 0..fi {
                prev[i] += row[i] * bar[o];
                for d in 0..k {
                    prev_d[d * fi + i] += row[i] * bar_d[d * fo + o];
                    prev_dd[d * fi + i] += row[i] * bar_dd[d * fo + o];
                }
            }
        }
        std::mem::swap(bar, prev);
        std::mem::swap(bar_d, prev_d);
        std::mem::swap(bar_dd, prev_dd);
    }
}
