use super::{Real, Shape, Tensor};
use crate::{Error, Result};

pub fn relu<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Passes `grad_out` where `x > 0`, zero elsewhere.
pub fn relu_backward<T: Real>(x: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    same_shape("relu_backward", x.shape(), grad_out.shape())?;
    let data = x
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&x, &g)| if x > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::from_vec(x.shape(), data)
}

pub fn add<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let mut out = a.clone();
    add_assign(&mut out, b)?;
    Ok(out)
}

pub fn add_assign<T: Real>(a: &mut Tensor<T>, b: &Tensor<T>) -> Result<()> {
    same_shape("add", a.shape(), b.shape())?;
    for (x, &y) in a.data_mut().iter_mut().zip(b.data()) {
        *x = *x + y;
    }
    Ok(())
}

fn same_shape(op: &'static str, a: Shape, b: Shape) -> Result<()> {
    for (dim, x, y) in [
        ("batch", a.n, b.n),
        ("channels", a.c, b.c),
        ("height", a.h, b.h),
        ("width", a.w, b.w),
    ] {
        if x != y {
            return Err(Error::shape(op, dim, x, y));
        }
    }
    Ok(())
}

/// Concatenates along the channel axis, preserving order.
pub fn concat_channels<T: Real>(ts: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let first = ts
        .first()
        .ok_or_else(|| Error::shape("concat_channels", "input count", 1, 0))?
        .shape();
    for t in &ts[1..] {
        let s = t.shape();
        for (dim, x, y) in [
            ("batch", first.n, s.n),
            ("height", first.h, s.h),
            ("width", first.w, s.w),
        ] {
            if x != y {
                return Err(Error::shape("concat_channels", dim, x, y));
            }
        }
    }
    let c: usize = ts.iter().map(|t| t.shape().c).sum();
    let shape = Shape::new(first.n, c, first.h, first.w);
    let mut data = Vec::with_capacity(shape.numel());
    for n in 0..first.n {
        for t in ts {
            let item = t.shape().c * first.plane();
            data.extend_from_slice(&t.data()[n * item..(n + 1) * item]);
        }
    }
    Tensor::from_vec(shape, data)
}

/// Inverse of [`concat_channels`]: splits into pieces of the given widths.
pub fn split_channels<T: Real>(x: &Tensor<T>, widths: &[usize]) -> Result<Vec<Tensor<T>>> {
    let s = x.shape();
    let total: usize = widths.iter().sum();
    if total != s.c {
        return Err(Error::shape("split_channels", "channels", s.c, total));
    }
    let plane = s.plane();
    let mut out: Vec<Vec<T>> = widths
        .iter()
        .map(|&c| Vec::with_capacity(s.n * c * plane))
        .collect();
    for n in 0..s.n {
        let mut start = (n * s.c) * plane;
        for (piece, &c) in out.iter_mut().zip(widths) {
            piece.extend_from_slice(&x.data()[start..start + c * plane]);
            start += c * plane;
        }
    }
    out.into_iter()
        .zip(widths)
        .map(|(d, &c)| Tensor::from_vec(Shape::new(s.n, c, s.h, s.w), d))
        .collect()
}

/// Sub-pixel rearrangement: `out(n, c, h*r + i, w*r + j) = in(n, c*r² + i*r + j, h, w)`.
pub fn pixel_shuffle<T: Real>(x: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    let s = x.shape();
    let rr = r * r;
    if r == 0 || !s.c.is_multiple_of(rr) {
        return Err(Error::NotDivisible {
            op: "pixel_shuffle",
            what: "channels",
            value: s.c,
            divisor: rr,
        });
    }
    let oc = s.c / rr;
    let out_shape = Shape::new(s.n, oc, s.h * r, s.w * r);
    let mut out = Tensor::zeros(out_shape);
    for n in 0..s.n {
        for c in 0..oc {
            for i in 0..r {
                for j in 0..r {
                    let src = x.plane(n, c * rr + i * r + j);
                    for h in 0..s.h {
                        for w in 0..s.w {
                            out.set(n, c, h * r + i, w * r + j, src[h * s.w + w]);
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Inverse of [`pixel_shuffle`]; also its backward pass.
pub fn pixel_unshuffle<T: Real>(x: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    let s = x.shape();
    if r == 0 || !s.h.is_multiple_of(r) || !s.w.is_multiple_of(r) {
        return Err(Error::NotDivisible {
            op: "pixel_unshuffle",
            what: "spatial size",
            value: if r != 0 && !s.h.is_multiple_of(r) {
                s.h
            } else {
                s.w
            },
            divisor: r,
        });
    }
    let (h, w) = (s.h / r, s.w / r);
    Ok(Tensor::from_fn(
        Shape::new(s.n, s.c * r * r, h, w),
        |[n, c, y, xx]| {
            let base = c / (r * r);
            let i = (c % (r * r)) / r;
            let j = c % r;
            x.at(n, base, y * r + i, xx * r + j)
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t(shape: Shape, v: Vec<f64>) -> Tensor<f64> {
        Tensor::from_vec(shape, v).unwrap()
    }

    #[test]
    fn relu_examples() {
        let x = t(Shape::new(1, 1, 1, 3), vec![-1.0, 0.0, 2.0]);
        assert_eq!(relu(&x).data(), &[0.0, 0.0, 2.0]);
        let pos = t(Shape::new(1, 1, 1, 3), vec![0.5, 1.0, 7.0]);
        assert_eq!(relu(&pos), pos);
        let g = relu_backward(
            &t(Shape::new(1, 1, 1, 2), vec![-1.0, 2.0]),
            &t(Shape::new(1, 1, 1, 2), vec![5.0, 7.0]),
        )
        .unwrap();
        assert_eq!(g.data(), &[0.0, 7.0]);
    }

    #[test]
    fn add_identities() {
        let a = Tensor::from_fn(Shape::new(2, 2, 2, 2), |[n, c, h, w]| {
            (n + 2 * c + 3 * h) as f64 - w as f64
        });
        assert_eq!(add(&a, &Tensor::zeros(a.shape())).unwrap(), a);
        let neg = a.scale(-1.0);
        assert!(add(&a, &neg).unwrap().data().iter().all(|&v| v == 0.0));
        let b = Tensor::zeros(Shape::new(2, 3, 2, 2));
        assert!(add(&a, &b).unwrap_err().to_string().contains("channels"));
    }

    #[test]
    fn concat_examples() {
        let a = Tensor::full(Shape::new(1, 1, 2, 2), 1.0);
        let b = Tensor::full(Shape::new(1, 1, 2, 2), 2.0);
        assert_eq!(concat_channels(&[&a]).unwrap(), a);
        let c = concat_channels(&[&a, &b]).unwrap();
        assert_eq!(c.shape(), Shape::new(1, 2, 2, 2));
        assert_eq!(c.plane(0, 0), &[1.0; 4]);
        assert_eq!(c.plane(0, 1), &[2.0; 4]);
        let bad = Tensor::full(Shape::new(1, 1, 3, 2), 2.0);
        assert!(concat_channels(&[&a, &bad])
            .unwrap_err()
            .to_string()
            .contains("height"));
    }

    #[test]
    fn shuffle_examples() {
        let x = t(Shape::new(1, 4, 1, 1), vec![0.0, 1.0, 2.0, 3.0]);
        let y = pixel_shuffle(&x, 2).unwrap();
        assert_eq!(y.shape(), Shape::new(1, 1, 2, 2));
        assert_eq!(y.data(), &[0.0, 1.0, 2.0, 3.0]);
        assert_eq!(y.at(0, 0, 1, 0), 2.0);
        assert_eq!(pixel_shuffle(&x, 1).unwrap(), x);
        assert!(matches!(
            pixel_shuffle(&Tensor::<f64>::zeros(Shape::new(1, 6, 1, 1)), 2),
            Err(Error::NotDivisible { .. })
        ));
    }

    fn arb_tensor() -> impl Strategy<Value = (Tensor<f64>, usize)> {
        (1usize..3, 1usize..4, 1usize..4, 1usize..4, 1usize..4).prop_flat_map(|(n, c, h, w, r)| {
            let shape = Shape::new(n, c * r * r, h, w);
            proptest::collection::vec(-10.0f64..10.0, shape.numel())
                .prop_map(move |v| (Tensor::from_vec(shape, v).unwrap(), r))
        })
    }

    proptest! {
        #[test]
        fn shuffle_round_trip_preserves_values((x, r) in arb_tensor()) {
            let y = pixel_shuffle(&x, r).unwrap();
            prop_assert_eq!(y.numel(), x.numel());
            // Index formula, checked directly.
            let s = x.shape();
            for c in 0..y.shape().c {
                for h in 0..s.h { for w in 0..s.w { for i in 0..r { for j in 0..r {
                    prop_assert_eq!(y.at(0, c, h * r + i, w * r + j), x.at(0, c * r * r + i * r + j, h, w));
                }}}}
            }
            let mut a = x.data().to_vec();
            let mut b = y.data().to_vec();
            a.sort_by(f64::total_cmp);
            b.sort_by(f64::total_cmp);
            prop_assert_eq!(a, b);
            prop_assert_eq!(pixel_unshuffle(&y, r).unwrap(), x);
        }

        #[test]
        fn split_then_concat_is_identity((x, _r) in arb_tensor(), cut in 0usize..100) {
            let c = x.shape().c;
            let first = cut % (c + 1);
            let parts = split_channels(&x, &[first, c - first]).unwrap();
            let joined = concat_channels(&parts.iter().collect::<Vec<_>>()).unwrap();
            prop_assert_eq!(joined, x);
        }

        #[test]
        fn add_matches_scalar_loop(v in proptest::collection::vec(-1e3f64..1e3, 24), u in proptest::collection::vec(-1e3f64..1e3, 24)) {
            let s = Shape::new(1, 2, 3, 4);
            let a = t(s, v.clone());
            let b = t(s, u.clone());
            let sum = add(&a, &b).unwrap();
            for i in 0..24 {
                prop_assert_eq!(sum.data()[i], v[i] + u[i]);
            }
            // Inputs untouched.
            prop_assert_eq!(a.data(), &v[..]);
        }
    }
}
