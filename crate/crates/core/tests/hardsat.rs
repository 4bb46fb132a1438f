use racert::dynexpr::Dynamics;
use racert::generator::{Controller, Generator};
use racert::hardsat::soft::WarmConfig;
use racert::hardsat::{self, dense_check, HardSatConfig, Mode, Status};
use racert::mcsim::{self, ClosedLoop, EstimateConfig, RolloutConfig};
use racert::net::{CertArch, CertInit, CertificateNet, ControllerArch, ControllerNet, OutAct, OutChannel};
use racert::partition::Partition;
use racert::{Hyperbox, ReachAvoidSpec, Region};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

/// `dx = (-x + u) dt + 0.1 dw` on `[-1, 4]`, unsafe above 3.
fn toy() -> (ReachAvoidSpec, Dynamics) {
    let bx = |lo: f64, hi: f64| Hyperbox::from_bounds(&[(lo, hi)]).unwrap();
    let spec = ReachAvoidSpec::new(
        bx(-1.0, 4.0),
        Region::from_box(bx(1.0, 2.0)),
        Region::from_box(bx(-0.5, 0.5)),
        Region::from_box(bx(-1.0, 3.0)),
        0.8,
    )
    .unwrap();
    let d = Dynamics::parse(1, 1, 1, &["-x1 + u1"], &[vec!["0.1"]], BTreeMap::new(), BTreeMap::new()).unwrap();
    (spec, d)
}

fn cfg() -> HardSatConfig {
    HardSatConfig {
        eps_gen: Some(1e-3),
        grid: vec![64],
        max_epochs: 4000,
        p_start: None,
        warm: WarmConfig {
            samples: 2_000,
            epochs: 2_000,
            batch: 128,
            ..WarmConfig::default()
        },
        ..HardSatConfig::default()
    }
}

fn cert(seed: u64) -> CertificateNet {
    let arch = CertArch::new(1, 8, 8, true).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    CertificateNet::init(arch, vec![4.0], 10.0, CertInit::default(), &mut rng).unwrap()
}

#[test]
fn joint_synthesis_is_certified_and_monte_carlo_agrees() {
    let (spec, dynm) = toy();
    let arch = ControllerArch {
        n: 1,
        hidden: vec![],
        outputs: vec![OutChannel::ranged(OutAct::Tanh, -3.0, 3.0).unwrap()],
    };
    // start from a weak stabilising feedback u = 3 tanh(-x/4) and warm start
    // the certificate alone; a joint warm start here settles on a bowl in the
    // initial set with the controller parking the state at its bottom
    let mut ctrl = ControllerNet::zeros(arch, vec![4.0]).unwrap();
    ctrl.params = vec![-1.0, 0.0];
    let gen = Generator::new(&dynm, Controller::Net(ctrl.clone())).unwrap();
    let mut c = cfg();
    c.warm.controller = false;
    let out = hardsat::train(&spec, &gen, cert(2), Mode::Synthesize, &c, 7, &mut |_| {}).unwrap();
    assert_eq!(out.status, Status::Sat, "{:?}", out.reason);
    let trained = out.ctrl.clone().unwrap();
    assert_ne!(trained, ctrl.params);

    let closed = out.generator(&gen);
    let d = dense_check(&spec, &closed, &out.cert, None, spec.beta, 50_000, 0, 1e-9, 11).unwrap();
    assert!(d.passed(), "{d:?}");

    // a certified closed loop cannot be clearly worse than the certified bound
    let mut net = ctrl;
    net.params = trained;
    let sys = ClosedLoop::new(dynm, Controller::Net(net)).unwrap();
    let est = mcsim::estimate(
        &sys,
        &spec,
        &EstimateConfig {
            rollouts: 400,
            rollout: RolloutConfig {
                dt: 1e-2,
                horizon: 20.0,
                ..RolloutConfig::default()
            },
            ..EstimateConfig::default()
        },
        13,
    )
    .unwrap();
    assert!(est.ci.hi >= 0.8, "{est:?}");
}

#[test]
fn refinement_alone_certifies_a_frozen_certificate() {
    let (spec, _) = toy();
    let dynm = Dynamics::parse(1, 0, 1, &["-x1"], &[vec!["0.1"]], BTreeMap::new(), BTreeMap::new()).unwrap();
    let gen = Generator::new(&dynm, Controller::None).unwrap();
    let c = cfg();
    let out = hardsat::train(&spec, &gen, cert(1), Mode::Verify, &c, 4, &mut |_| {}).unwrap();
    assert_eq!(out.status, Status::Sat, "{:?}", out.reason);

    let mut coarse = Partition::grid(&spec, &[4], &out.cert.s_in, c.budget).unwrap();
    let r = hardsat::refine_only(&gen, &out.cert, None, &mut coarse, spec.beta, out.eps_gen, c.slack, usize::MAX, 40).unwrap();
    assert!(r.zero, "{r:?}");
    assert!(r.losses[0] > 0.0);
    assert_eq!(*r.losses.last().unwrap(), 0.0);
    assert_eq!(r.cells, coarse.len());

    // with one split per kind and round it still gets there, just later
    let mut slow = Partition::grid(&spec, &[4], &out.cert.s_in, c.budget).unwrap();
    let s = hardsat::refine_only(&gen, &out.cert, None, &mut slow, spec.beta, out.eps_gen, c.slack, 1, 10_000).unwrap();
    assert!(s.zero);
    assert!(s.rounds >= r.rounds);
}
