//! Scratch probe for end-to-end numbers while calibrating defaults.

use geoqkd_core::channel::DiscreteDistribution;
use geoqkd_core::geometry::LinkGeometry;
use geoqkd_core::jitter::{DeflectionMap, JitterModel};
use geoqkd_core::math::log_spaced;
use geoqkd_core::optimize::scan_mu;
use geoqkd_core::protocols::{
    average_over_pdte, mp_point_with_table, tf_point, Compensation, DetectorParams,
    MisalignmentTable, MpParams, TfParams,
};
use geoqkd_core::rng::SeedTree;
use geoqkd_core::turbulence::coupling::turbulence_distribution;
use geoqkd_core::turbulence::covariance::CorrectionKind;
use geoqkd_core::turbulence::profile::TurbulenceProfile;
use geoqkd_core::turbulence::zernike::{corrected_mode_count, ZernikeBasis};
use std::time::Instant;

fn main() {
    let t0 = Instant::now();
    let tau_abs_db: f64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(1.0);
    let n_turb: usize = std::env::args()
        .nth(2)
        .and_then(|s| s.parse().ok())
        .unwrap_or(2048);

    let profile = TurbulenceProfile::synthetic_calibrated(
        0.25,
        8.51e-6,
        0.03,
        1.55e-6,
        30f64.to_radians(),
    )
    .unwrap();
    let geometry = LinkGeometry::geo_default();
    let basis = ZernikeBasis::new(3, 1.0, 64).unwrap();
    let ao = corrected_mode_count(1.0);
    let (set, turb) = turbulence_distribution(
        &profile,
        &basis,
        ao,
        CorrectionKind::Mmse,
        &geometry,
        n_turb,
        42,
    )
    .unwrap();
    println!(
        "turb: mean {:.4} std {:.4}  ({} modes, {:.1} s)",
        set.mean_eta(),
        set.std_eta(),
        ao,
        t0.elapsed().as_secs_f64()
    );

    let jitter =
        JitterModel::from_geometry(&geometry, 0.07e-6, DeflectionMap::NumericOverlap).unwrap();
    let jdist = jitter.distribution(8192, &SeedTree::new(42)).unwrap();
    println!(
        "jitter: eta0 {:.4} mean_eta {:.4} sigma_r {:.3} m spot {:.2} m",
        jitter.eta0(),
        jdist.mean_eta(),
        jitter.sigma_r_m,
        jitter.beam_spot_radius_m
    );

    let fixed_db = geometry.geometric_loss_db() + 2.8 + tau_abs_db;
    println!(
        "fixed loss: geo {:.2} + syst 2.80 + abs {:.2} = {:.2} dB",
        geometry.geometric_loss_db(),
        tau_abs_db,
        fixed_db
    );
    let pdte: DiscreteDistribution = turb
        .convolve_product(&jdist)
        .unwrap()
        .shift_db(fixed_db)
        .capped(0.0, 160.0)
        .unwrap();
    let st = pdte.stats();
    println!(
        "PDTE: mean_eta_db {:.2} mean_db {:.2} p5 {:.2} p50 {:.2} p95 {:.2} lost {:.2e} bins {}",
        -10.0 * st.mean_eta.log10(),
        st.mean_db,
        st.p5_db,
        st.p50_db,
        st.p95_db,
        st.lost,
        pdte.len()
    );

    let det = DetectorParams::optimistic();
    let grid = log_spaced(1e-3, 1.0, 25);

    let tfp = TfParams::default();
    let t1 = Instant::now();
    let tf_report = scan_mu(
        |mu| {
            average_over_pdte(
                |ea, eb| tf_point(mu, mu, ea, eb, &det, &tfp),
                &pdte,
                &pdte,
                Compensation::Compensated,
            )
        },
        &grid,
    )
    .unwrap();
    let o = &tf_report.optimum;
    println!(
        "TF : R {:.3e} /pulse ({:.1} bit/s) mu* {:.4} e_x {:.4} e_z {:.4} [{:.1} s]",
        o.rate_per_pulse,
        o.rate_bps,
        o.mu,
        o.e_x,
        o.e_z,
        t1.elapsed().as_secs_f64()
    );
    for p in &tf_report.points {
        if p.mu >= 0.01 {
            println!(
                "  tf mu {:.4} R {:.3e} e_x {:.4} e_z {:.4} gain {:.3e}",
                p.mu,
                p.rate_per_pulse,
                p.e_x,
                p.e_z,
                p.aux_or_zero("gain")
            );
        }
    }

    let mpp = MpParams::default();
    let table = MisalignmentTable::new(&mpp).unwrap();
    let t2 = Instant::now();
    let mp_report = scan_mu(
        |mu| {
            average_over_pdte(
                |ea, eb| mp_point_with_table(mu, ea, eb, &det, &mpp, &table),
                &pdte,
                &pdte,
                Compensation::NonCompensated,
            )
        },
        &grid,
    )
    .unwrap();
    let o = &mp_report.optimum;
    println!(
        "MP : R {:.3e} /pulse ({:.1} bit/s) mu* {:.4} e_x {:.4} e_z {:.4} e_d {:.4} [{:.1} s]",
        o.rate_per_pulse,
        o.rate_bps,
        o.mu,
        o.e_x,
        o.e_z,
        o.aux_or_zero("e_d"),
        t2.elapsed().as_secs_f64()
    );

    // Nested optimization: for each l_max, rescan mu and keep the joint best.
    let t3 = Instant::now();
    let lgrid = geoqkd_core::optimize::default_lmax_grid(15);
    let mut joint: Option<(u32, f64, f64)> = None;
    for &lmax in &lgrid {
        let mut p2 = mpp.clone();
        p2.l_max = lmax;
        let tbl = MisalignmentTable::new(&p2).unwrap();
        let rep = scan_mu(
            |mu| {
                average_over_pdte(
                    |ea, eb| mp_point_with_table(mu, ea, eb, &det, &p2, &tbl),
                    &pdte,
                    &pdte,
                    Compensation::NonCompensated,
                )
            },
            &grid,
        )
        .unwrap();
        let o = &rep.optimum;
        println!(
            "  mp lmax {:>7} R {:.3e} mu* {:.4} e_x {:.4} e_z {:.4} e_d {:.4}",
            lmax,
            o.rate_per_pulse,
            o.mu,
            o.e_x,
            o.e_z,
            o.aux_or_zero("e_d")
        );
        if joint.is_none() || o.rate_per_pulse > joint.unwrap().1 {
            joint = Some((lmax, o.rate_per_pulse, o.mu));
        }
    }
    let (jl, jr, jm) = joint.unwrap();
    println!(
        "MP joint: lmax* {} R {:.3e} mu* {:.4} [{:.1} s]",
        jl,
        jr,
        jm,
        t3.elapsed().as_secs_f64()
    );

    // Detector-scenario endpoints at this aperture.
    for (name, d) in [
        ("idealized", DetectorParams::idealized()),
        ("pessimistic", DetectorParams::pessimistic()),
    ] {
        let tf_r = scan_mu(
            |mu| {
                average_over_pdte(
                    |ea, eb| tf_point(mu, mu, ea, eb, &d, &tfp),
                    &pdte,
                    &pdte,
                    Compensation::Compensated,
                )
            },
            &grid,
        )
        .unwrap();
        let mp_r = scan_mu(
            |mu| {
                average_over_pdte(
                    |ea, eb| mp_point_with_table(mu, ea, eb, &d, &mpp, &table),
                    &pdte,
                    &pdte,
                    Compensation::NonCompensated,
                )
            },
            &grid,
        )
        .unwrap();
        println!(
            "{name}: TF R {:.3e} ({:.1} bit/s) mu* {:.4} | MP R {:.3e} ({:.1} bit/s) mu* {:.4}",
            tf_r.optimum.rate_per_pulse,
            tf_r.optimum.rate_bps,
            tf_r.optimum.mu,
            mp_r.optimum.rate_per_pulse,
            mp_r.optimum.rate_bps,
            mp_r.optimum.mu
        );
    }
    println!("total {:.1} s", t0.elapsed().as_secs_f64());
}
