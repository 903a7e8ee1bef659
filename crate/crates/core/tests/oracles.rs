//! Independent oracles and property checks across the public API.

use latmetric::balda::Balda;
use latmetric::eigensolver::{dense_spectrum, ground_state, EigenOptions, LanczosMode};
use latmetric::hilbert::{overlap, random_state, Basis};
use latmetric::inversion::{invert_density, InversionOptions};
use latmetric::ks::{single_particle_solve, solve_ks, KsOptions};
use latmetric::metrics::{density_distance, potential_distance_a, potential_distance_b, wavefunction_distance};
use latmetric::{build_hubbard, HubbardSystem, ManyBodyState, SiteField, SpinSector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn system(d: usize, nu: usize, nd: usize, u: f64, v: Vec<f64>) -> HubbardSystem {
    HubbardSystem::new(1.0, u, SiteField::new(v).unwrap(), SpinSector::new(d, nu, nd).unwrap()).unwrap()
}

fn wiggle(d: usize) -> Vec<f64> {
    (0..d).map(|i| 0.3 * (1.7 * i as f64).sin()).collect()
}

// Second quantization on 2d modes, up modes first, with Jordan-Wigner strings.
mod fock {
    pub fn annihilate(state: u64, mode: usize) -> Option<(u64, f64)> {
        if state >> mode & 1 == 0 {
            return None;
        }
        let sign = if (state & ((1 << mode) - 1)).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
        Some((state & !(1 << mode), sign))
    }

    pub fn create(state: u64, mode: usize) -> Option<(u64, f64)> {
        if state >> mode & 1 == 1 {
            return None;
        }
        let sign = if (state & ((1 << mode) - 1)).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
        Some((state | 1 << mode, sign))
    }

    /// `<bra| H |ket>` for the open Hubbard chain.
    pub fn element(bra: u64, ket: u64, d: usize, t: f64, u: f64, v: &[f64]) -> f64 {
        let mut h = 0.0;
        if bra == ket {
            for i in 0..d {
                let up = (ket >> i & 1) as f64;
                let dn = (ket >> (i + d) & 1) as f64;
                h += u * up * dn + v[i] * (up + dn);
            }
        }
        for spin in 0..2 {
            for i in 0..d - 1 {
                let (a, b) = (i + spin * d, i + 1 + spin * d);
                for (to, from) in [(a, b), (b, a)] {
                    let hopped = annihilate(ket, from).and_then(|(s, s1)| create(s, to).map(|(s, s2)| (s, s1 * s2)));
                    if let Some((s, sign)) = hopped {
                        if s == bra {
                            h += -t * sign;
                        }
                    }
                }
            }
        }
        h
    }
}

#[test]
fn sparse_matches_jordan_wigner_oracle() {
    for d in 2..=4 {
        for nu in 0..=d {
            for nd in 0..=d {
                let v = wiggle(d);
                let sys = system(d, nu, nd, 3.0, v.clone());
                let op = build_hubbard(&sys).unwrap();
                let basis = op.basis();
                let fock_of = |i: usize| {
                    let c = basis.config_at(i);
                    c.up | c.down << d
                };
                for i in 0..basis.dim() {
                    for j in 0..basis.dim() {
                        let expected = fock::element(fock_of(i), fock_of(j), d, 1.0, 3.0, &v);
                        let got = op.entry(i, j);
                        assert!((got - expected).abs() < 1e-13, "d={d} ({nu},{nd}) [{i},{j}]: {got} vs {expected}");
                    }
                }
            }
        }
    }
}

#[test]
fn hermitian_on_random_pairs() {
    let sys = system(6, 3, 2, 4.0, wiggle(6));
    let op = build_hubbard(&sys).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        let x = random_state(sys.sector, &mut rng).unwrap();
        let y = random_state(sys.sector, &mut rng).unwrap();
        let hx = op.apply(x.amplitudes()).unwrap();
        let hy = op.apply(y.amplitudes()).unwrap();
        let a: f64 = x.amplitudes().iter().zip(&hy).map(|(p, q)| p * q).sum();
        let b: f64 = hx.iter().zip(y.amplitudes()).map(|(p, q)| p * q).sum();
        assert!((a - b).abs() < 1e-12, "{a} {b}");
    }
}

#[test]
fn non_interacting_energy_factorizes() {
    for (d, nu, nd) in [(4, 2, 2), (6, 3, 2), (7, 1, 4), (8, 2, 3)] {
        let v = wiggle(d);
        let sys = system(d, nu, nd, 0.0, v.clone());
        let gs = build_hubbard(&sys).unwrap().ground_state(&EigenOptions::default()).unwrap();
        let orb = single_particle_solve(&SiteField::new(v).unwrap(), d, 1.0).unwrap();
        let expected: f64 = orb.energies[..nu].iter().sum::<f64>() + orb.energies[..nd].iter().sum::<f64>();
        assert!((gs.energy - expected).abs() < 1e-10, "{} vs {expected}", gs.energy);
    }
}

#[test]
fn lanczos_matches_dense_on_small_sectors() {
    let opts = EigenOptions {
        dense_threshold: 0,
        mode: LanczosMode::FullReorthogonalization,
        ..EigenOptions::default()
    };
    for d in 2..=6 {
        for nu in 0..=d {
            for nd in 0..=d {
                let sys = system(d, nu, nd, 4.0, wiggle(d));
                let op = build_hubbard(&sys).unwrap();
                if op.basis().dim() < 2 {
                    continue;
                }
                let dense = dense_spectrum(&op.to_dense()).unwrap();
                let r = ground_state(&op, &opts).unwrap();
                assert!(!r.dense);
                assert!((r.energy - dense.values[0]).abs() < 1e-12, "d={d} ({nu},{nd})");
                let ov: f64 = r.vector.iter().zip(dense.vectors.column(0).iter()).map(|(a, b)| a * b).sum();
                assert!(ov.abs() > 1.0 - 1e-10, "d={d} ({nu},{nd}) overlap {ov}");
                assert!(r.energy <= r.start_energy + 1e-12);
                for w in r.ritz_history.windows(2) {
                    assert!(w[1] <= w[0] + 1e-13, "Ritz value rose: {w:?}");
                }
            }
        }
    }
}

#[test]
fn two_pass_matches_full_reorthogonalization() {
    let sys = system(10, 3, 3, 4.0, wiggle(10));
    let op = build_hubbard(&sys).unwrap();
    let run = |mode| {
        let opts = EigenOptions {
            dense_threshold: 0,
            mode,
            tol: 1e-12,
            probe_degeneracy: false,
            ..EigenOptions::default()
        };
        ground_state(&op, &opts).unwrap()
    };
    let a = run(LanczosMode::FullReorthogonalization);
    let b = run(LanczosMode::TwoPass);
    assert!((a.energy - b.energy).abs() < 1e-11);
    let ov: f64 = a.vector.iter().zip(&b.vector).map(|(x, y)| x * y).sum();
    assert!(ov > 1.0 - 1e-10, "{ov}");
}

#[test]
fn beta_at_zero_interaction() {
    let b = Balda::new(0.0, 1.0).unwrap().beta();
    assert!((b - 2.0).abs() < 1e-8, "{b}");
}

#[test]
fn ks_matches_exact_without_interaction() {
    let v = wiggle(8);
    let sys = system(8, 3, 2, 0.0, v);
    let ks = solve_ks(&sys, &KsOptions::default()).unwrap();
    let op = build_hubbard(&sys).unwrap();
    let gs = op.ground_state(&EigenOptions::default()).unwrap();
    let exact = op.basis().density(&gs.state).unwrap();
    assert!(ks.density_total.max_abs_diff(&exact.total) < 1e-10);
    assert!(ks.density_up.max_abs_diff(&exact.up) < 1e-10);
}

#[test]
fn ks_mirror_symmetric_potential_gives_mirror_symmetric_density() {
    let d = 9;
    let v: Vec<f64> = (0..d).map(|i| 0.4 * (i as f64 - 4.0).powi(2) - 1.0).collect();
    let ks = solve_ks(&system(d, 2, 1, 4.0, v), &KsOptions::default()).unwrap();
    let n = ks.density_total.as_slice();
    for i in 0..d {
        assert!((n[i] - n[d - 1 - i]).abs() < 1e-8);
    }
}

#[test]
fn inversion_fixed_point_reproduces_target() {
    let sys = system(6, 2, 2, 4.0, vec![0.5, -0.2, 0.0, 0.7, -1.0, 0.3]);
    let op = build_hubbard(&sys).unwrap();
    let gs = op.ground_state(&EigenOptions::default()).unwrap();
    let target = op.basis().density(&gs.state).unwrap().total;
    let opts = InversionOptions::default();
    let r = invert_density(&target, 4.0, 1.0, sys.sector, &SiteField::zeros(6), &opts).unwrap();
    let check = build_hubbard(&sys.with_potential(r.v.clone()).unwrap()).unwrap();
    let gs2 = check.ground_state(&EigenOptions::default()).unwrap();
    let n2 = check.basis().density(&gs2.state).unwrap().total;
    let err: f64 = n2.iter().zip(target.iter()).map(|(a, b)| (a - b).abs()).sum::<f64>() / 6.0;
    assert!(err < 2.0 * opts.threshold, "{err}");
}

#[test]
fn inversion_is_gauge_invariant() {
    let sys = system(6, 2, 1, 2.0, vec![0.0, 0.4, -0.3, 0.0, 0.2, 0.0]);
    let op = build_hubbard(&sys).unwrap();
    let gs = op.ground_state(&EigenOptions::default()).unwrap();
    let target = op.basis().density(&gs.state).unwrap().total;
    let opts = InversionOptions::default();
    let base = invert_density(&target, 2.0, 1.0, sys.sector, &SiteField::zeros(6), &opts).unwrap();
    for c in [-3.0, 0.7, 25.0] {
        let r = invert_density(&target, 2.0, 1.0, sys.sector, &SiteField::constant(6, c), &opts).unwrap();
        assert!(r.v.max_abs_diff(&base.v) < 1e-8, "c={c}");
    }
}

#[test]
fn dense_eigenvectors_accurate_on_shifted_chain() {
    // A plain QR sweep leaves residuals near 3e-6 on this matrix.
    let v = [1.709389, 1.118079, 0.794590, -0.685964, 0.893075, 1.981139];
    let m = build_hubbard(&system(6, 2, 1, 0.0, v.to_vec())).unwrap().to_dense();
    let spec = dense_spectrum(&m).unwrap();
    for k in 0..m.nrows() {
        let x = spec.vectors.column(k);
        assert!((&m * x - x * spec.values[k]).norm() < 1e-12, "eigenpair {k}");
    }
}

fn sector_state(seed: u64, sector: SpinSector) -> ManyBodyState {
    random_state(sector, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn field(len: usize) -> impl Strategy<Value = SiteField> {
    prop::collection::vec(-3.0f64..3.0, len).prop_map(|v| SiteField::new(v).unwrap())
}

fn small_field(len: usize) -> impl Strategy<Value = SiteField> {
    prop::collection::vec(-0.5f64..0.5, len).prop_map(|v| SiteField::new(v).unwrap())
}

fn density_field(d: usize, n: f64) -> impl Strategy<Value = SiteField> {
    prop::collection::vec(0.01f64..1.0, d).prop_map(move |w| {
        let s: f64 = w.iter().sum();
        SiteField::new(w.iter().map(|x| x * n / s).collect()).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn density_sums_to_particle_numbers(seed in any::<u64>(), nu in 0usize..=5, nd in 0usize..=5) {
        let sector = SpinSector::new(6, nu.min(6), nd.min(6)).unwrap();
        let basis = Basis::new(sector).unwrap();
        let rho = basis.density(&sector_state(seed, sector)).unwrap();
        prop_assert!((rho.up.sum() - sector.n_up() as f64).abs() < 1e-12);
        prop_assert!((rho.down.sum() - sector.n_down() as f64).abs() < 1e-12);
    }

    #[test]
    fn overlap_symmetric_and_sign_blind(s1 in any::<u64>(), s2 in any::<u64>()) {
        let sector = SpinSector::new(5, 2, 2).unwrap();
        let a = sector_state(s1, sector);
        let b = sector_state(s2, sector);
        let ab = overlap(&a, &b).unwrap();
        prop_assert_eq!(ab, overlap(&b, &a).unwrap());
        let neg = ManyBodyState::from_amplitudes(sector, a.amplitudes().iter().map(|x| -x).collect()).unwrap();
        prop_assert!((overlap(&neg, &b).unwrap().abs() - ab.abs()).abs() < 1e-15);
    }

    #[test]
    fn vxc_is_derivative_of_exc(n in 0.02f64..1.98, ui in 0usize..4) {
        prop_assume!((n - 1.0).abs() > 1e-3);
        let u = [1.0, 2.0, 4.0, 8.0][ui];
        let f = Balda::new(u, 1.0).unwrap();
        let h = 1e-6;
        let fd = (f.exc(n + h).unwrap() - f.exc(n - h).unwrap()) / (2.0 * h);
        prop_assert!((f.vxc(n).unwrap() - fd).abs() < 1e-6);
    }

    #[test]
    fn exc_particle_hole_symmetric(n in 0.0f64..=2.0, ui in 0usize..4) {
        let u = [1.0, 2.0, 4.0, 8.0][ui];
        let f = Balda::new(u, 1.0).unwrap();
        prop_assert!((f.exc(n).unwrap() - f.exc(2.0 - n).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn ks_gauge_covariant(v in small_field(6), c in -5.0f64..5.0) {
        // Weak potentials and low filling keep every site clear of the n = 1
        // discontinuity, where plain density mixing cannot settle.
        let a = solve_ks(&system(6, 2, 1, 4.0, v.as_slice().to_vec()), &KsOptions::default()).unwrap();
        let b = solve_ks(&system(6, 2, 1, 4.0, v.shifted(c).into_vec()), &KsOptions::default()).unwrap();
        prop_assert!(a.density_total.max_abs_diff(&b.density_total) < 1e-12);
        prop_assert!(a.v_eff.shifted(c).max_abs_diff(&b.v_eff) < 1e-12);
    }

    #[test]
    fn ground_density_blind_to_constant_shift(v in field(6), c in -3.0f64..3.0, u in 0.0f64..6.0) {
        let density = |w: Vec<f64>| {
            let op = build_hubbard(&system(6, 2, 1, u, w)).unwrap();
            let gs = op.ground_state(&EigenOptions::default()).unwrap();
            op.basis().density(&gs.state).unwrap().total
        };
        let a = density(v.as_slice().to_vec());
        let b = density(v.shifted(c).into_vec());
        prop_assert!(a.max_abs_diff(&b) < 1e-10, "{}", a.max_abs_diff(&b));
    }

    #[test]
    fn potential_metrics_axioms(v1 in field(7), v2 in field(7), v3 in field(7), c1 in -5.0f64..5.0, c2 in -5.0f64..5.0) {
        for metric in [potential_distance_a, potential_distance_b] {
            let d12 = metric(&v1, &v2).unwrap();
            prop_assert_eq!(d12.raw, metric(&v2, &v1).unwrap().raw);
            prop_assert!((0.0..=1.0).contains(&d12.scaled));
            let d13 = metric(&v1, &v3).unwrap().raw;
            let d23 = metric(&v2, &v3).unwrap().raw;
            prop_assert!(d13 <= d12.raw + d23 + 1e-12);
            prop_assert!((metric(&v1.shifted(c1), &v2.shifted(c2)).unwrap().raw - d12.raw).abs() < 1e-12);
            prop_assert!(metric(&v1, &v1.shifted(c1)).unwrap().raw < 1e-12);
        }
    }

    #[test]
    fn density_metric_axioms(r1 in density_field(6, 3.0), r2 in density_field(6, 3.0), r3 in density_field(6, 3.0)) {
        let d12 = density_distance(&r1, &r2, 3.0).unwrap();
        prop_assert_eq!(d12.raw, density_distance(&r2, &r1, 3.0).unwrap().raw);
        prop_assert!((0.0..=1.0).contains(&d12.scaled));
        let d13 = density_distance(&r1, &r3, 3.0).unwrap().raw;
        let d23 = density_distance(&r2, &r3, 3.0).unwrap().raw;
        prop_assert!(d13 <= d12.raw + d23 + 1e-12);
        prop_assert_eq!(density_distance(&r1, &r1, 3.0).unwrap().raw, 0.0);
    }

    #[test]
    fn wavefunction_metric_axioms(s1 in any::<u64>(), s2 in any::<u64>(), s3 in any::<u64>()) {
        let sector = SpinSector::new(4, 2, 1).unwrap();
        let (a, b, c) = (sector_state(s1, sector), sector_state(s2, sector), sector_state(s3, sector));
        let ab = wavefunction_distance(&a, &b).unwrap();
        prop_assert_eq!(ab.raw, wavefunction_distance(&b, &a).unwrap().raw);
        prop_assert!((0.0..=1.0).contains(&ab.scaled));
        let ac = wavefunction_distance(&a, &c).unwrap().raw;
        let bc = wavefunction_distance(&b, &c).unwrap().raw;
        prop_assert!(ac <= ab.raw + bc + 1e-12);
        prop_assert!(wavefunction_distance(&a, &a).unwrap().raw < 1e-7);
    }
}
