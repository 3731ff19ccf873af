use nlgrad_core::tensor::Tensor;
use nlgrad_core::transform::{apply_power_sign, power_sign, NlSpec};
use proptest::prelude::*;

const NUS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

fn magnitude() -> impl Strategy<Value = f64> {
    (-8.0f64..8.0).prop_map(|e| 10f64.powf(e))
}

fn scalar() -> impl Strategy<Value = f64> {
    (magnitude(), any::<bool>()).prop_map(|(m, neg)| if neg { -m } else { m })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn sign_is_preserved(x in scalar(), i in 0usize..5) {
        let h = power_sign(x, NUS[i]);
        prop_assert_eq!(h.signum(), x.signum());
        prop_assert!(h != 0.0);
    }

    #[test]
    fn odd_to_the_last_bit(x in scalar(), i in 0usize..5) {
        prop_assert_eq!(power_sign(-x, NUS[i]).to_bits(), (-power_sign(x, NUS[i])).to_bits());
    }

    #[test]
    fn large_to_small_ratio_is_attenuated(a in magnitude(), b in magnitude(), nu in 0.01f64..0.99) {
        prop_assume!(a != b);
        let (x1, x2) = if a < b { (a, b) } else { (b, a) };
        let ratio = power_sign(x2, nu) / power_sign(x1, nu);
        prop_assert!(ratio <= (x2 / x1) * (1.0 + 1e-12));
    }

    #[test]
    fn monotone(a in scalar(), b in scalar(), i in 0usize..5) {
        let (x1, x2) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(power_sign(x1, NUS[i]) <= power_sign(x2, NUS[i]));
    }

    #[test]
    fn power_scaling(x in scalar(), c in magnitude(), i in 0usize..5) {
        let nu = NUS[i];
        let lhs = power_sign(c * x, nu);
        let rhs = c.powf(nu) * power_sign(x, nu);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs());
    }
}

#[test]
fn tensor_map_matches_scalar_map() {
    let g = Tensor::vector(vec![-4.0, -0.25, 0.0, 0.01, 9.0]);
    for nu in NUS {
        let out = apply_power_sign(&g, &NlSpec::new(nu).unwrap());
        for (o, x) in out.data().iter().zip(g.data()) {
            assert_eq!(*o, power_sign(*x, nu));
        }
    }
}
