//! Literal transcriptions of the feature formulas: nested loops, no shared
//! helpers, no algebraic shortcuts. Used to cross-check `features`.

use csiauth::model::CsiMatrix;
use std::f64::consts::PI;

fn amp(m: &CsiMatrix, k: usize, t: usize) -> f64 {
    let v = m.get(k, t);
    (v.re * v.re + v.im * v.im).sqrt()
}

fn phi(m: &CsiMatrix, k: usize, t: usize) -> f64 {
    let v = m.get(k, t);
    v.im.atan2(v.re)
}

pub fn features(m: &CsiMatrix, eps: f64) -> Vec<(&'static str, f64)> {
    let kk = m.subcarriers();
    let tt = m.samples();
    let kf = kk as f64;
    let tf = tt as f64;
    let mut out = Vec::new();

    // amplitude
    let mut amp_mean = 0.0;
    for k in 0..kk {
        let mut s = 0.0;
        for t in 0..tt {
            s += amp(m, k, t);
        }
        amp_mean += s / tf;
    }
    amp_mean /= kf;
    out.push(("amp_mean", amp_mean));

    let mut acc = 0.0;
    for k in 0..kk {
        let mut s = 0.0;
        for t in 0..tt {
            s += amp(m, k, t);
        }
        acc += (s / tf - amp_mean).powi(2);
    }
    out.push(("amp_mean_std", (acc / (kf - 1.0)).sqrt()));

    let mut var_k = vec![0.0; kk];
    for k in 0..kk {
        let mut mu = 0.0;
        for t in 0..tt {
            mu += amp(m, k, t);
        }
        mu /= tf;
        let mut s = 0.0;
        for t in 0..tt {
            s += (amp(m, k, t) - mu).powi(2);
        }
        var_k[k] = s / (tf - 1.0);
    }
    let mut amp_var_mean = 0.0;
    for k in 0..kk {
        amp_var_mean += var_k[k];
    }
    amp_var_mean /= kf;
    out.push(("amp_var_mean", amp_var_mean));
    let mut acc = 0.0;
    for k in 0..kk {
        acc += (var_k[k] - amp_var_mean).powi(2);
    }
    out.push(("amp_var_std", (acc / (kf - 1.0)).sqrt()));

    let mut skew = 0.0;
    let mut kurt = 0.0;
    for k in 0..kk {
        let mut mu = 0.0;
        for t in 0..tt {
            mu += amp(m, k, t);
        }
        mu /= tf;
        let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
        for t in 0..tt {
            let d = amp(m, k, t) - mu;
            m2 += d * d;
            m3 += d * d * d;
            m4 += d * d * d * d;
        }
        let sigma = (m2 / tf).sqrt();
        if sigma >= eps {
            skew += (m3 / tf) / sigma.powi(3);
            kurt += (m4 / tf) / sigma.powi(4) - 3.0;
        }
    }
    out.push(("amp_skew_mean", skew / kf));
    out.push(("amp_kurt_mean", kurt / kf));

    // phase
    let mut pm = 0.0;
    for k in 0..kk {
        let mut s = 0.0;
        for t in 0..tt {
            s += phi(m, k, t);
        }
        pm += s / tf;
    }
    out.push(("phase_mean_mean", pm / kf));

    let mut sd_phi = vec![0.0; kk];
    for k in 0..kk {
        let mut mu = 0.0;
        for t in 0..tt {
            mu += phi(m, k, t);
        }
        mu /= tf;
        let mut s = 0.0;
        for t in 0..tt {
            s += (phi(m, k, t) - mu).powi(2);
        }
        sd_phi[k] = (s / (tf - 1.0)).sqrt();
    }
    let mut psm = 0.0;
    for k in 0..kk {
        psm += sd_phi[k];
    }
    psm /= kf;
    out.push(("phase_std_mean", psm));
    let mut acc = 0.0;
    for k in 0..kk {
        acc += (sd_phi[k] - psm).powi(2);
    }
    out.push(("phase_std_std", (acc / (kf - 1.0)).sqrt()));

    let mut sd_d = vec![0.0; kk - 1];
    for k in 0..kk - 1 {
        let mut mu = 0.0;
        for t in 0..tt {
            mu += phi(m, k + 1, t) - phi(m, k, t);
        }
        mu /= tf;
        let mut s = 0.0;
        for t in 0..tt {
            s += (phi(m, k + 1, t) - phi(m, k, t) - mu).powi(2);
        }
        sd_d[k] = (s / (tf - 1.0)).sqrt();
    }
    let mut dm = 0.0;
    for k in 0..kk - 1 {
        dm += sd_d[k];
    }
    dm /= kf - 1.0;
    out.push(("dphi_std_mean", dm));
    let mut acc = 0.0;
    for k in 0..kk - 1 {
        acc += (sd_d[k] - dm).powi(2);
    }
    out.push(("dphi_std_std", (acc / (kf - 2.0)).sqrt()));

    // energy
    let mut e = vec![0.0; kk];
    for k in 0..kk {
        for t in 0..tt {
            e[k] += amp(m, k, t) * amp(m, k, t);
        }
        e[k] /= tf;
    }
    let mut mu_e = 0.0;
    for k in 0..kk {
        mu_e += e[k];
    }
    mu_e /= kf;
    out.push(("energy_mean", mu_e));
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for k in 0..kk {
        m2 += (e[k] - mu_e).powi(2);
        m3 += (e[k] - mu_e).powi(3);
        m4 += (e[k] - mu_e).powi(4);
    }
    let sigma_e = (m2 / kf).sqrt();
    if sigma_e >= eps {
        out.push(("energy_skewness", (m3 / kf) / sigma_e.powi(3)));
        out.push(("energy_kurtosis", (m4 / kf) / sigma_e.powi(4) - 3.0));
    } else {
        out.push(("energy_skewness", 0.0));
        out.push(("energy_kurtosis", 0.0));
    }
    let mut total = 0.0;
    for k in 0..kk {
        total += e[k];
    }
    let mut ent = 0.0;
    for k in 0..kk {
        let p = e[k] / total;
        if p > 0.0 {
            ent -= p * p.log2();
        }
    }
    out.push(("energy_entropy", ent));

    // spectral, on the time-averaged magnitude
    let mut hbar = vec![0.0; kk];
    for k in 0..kk {
        for t in 0..tt {
            hbar[k] += amp(m, k, t);
        }
        hbar[k] /= tf;
    }
    let mut sum_h = 0.0;
    let mut sum_fh = 0.0;
    for k in 0..kk {
        sum_h += hbar[k];
        sum_fh += m.freqs()[k] * hbar[k];
    }
    out.push(("spec_centroid", sum_fh / sum_h));
    let mut se = 0.0;
    for k in 0..kk {
        let q = hbar[k] / sum_h;
        if q > 0.0 {
            se -= q * q.log2();
        }
    }
    out.push(("spec_entropy", se));
    let mut prod = 1.0;
    let mut arith = 0.0;
    for k in 0..kk {
        let h = if hbar[k] < eps { eps } else { hbar[k] };
        prod *= h;
        arith += h;
    }
    out.push(("spec_flatness", prod.powf(1.0 / kf) / (arith / kf)));
    let mut c = 0.0;
    for k in 1..=kk {
        c += k as f64 * hbar[k - 1];
    }
    c /= sum_h;
    out.push(("spectral_centroid_amp", c));
    let mut w = 0.0;
    for k in 1..=kk {
        w += (k as f64 - c).powi(2) * hbar[k - 1];
    }
    out.push(("spectral_width", (w / sum_h).sqrt()));

    // empirical energy
    let (mut hi_s, mut hi_n, mut lo_s, mut lo_n) = (0.0, 0, 0.0, 0);
    for k in 0..kk {
        if e[k] >= mu_e {
            hi_s += e[k];
            hi_n += 1;
        } else {
            lo_s += e[k];
            lo_n += 1;
        }
    }
    let (r, a) = if hi_n == 0 || lo_n == 0 {
        (1.0, 1.0)
    } else {
        ((hi_s / hi_n as f64) / mu_e, (lo_s / lo_n as f64) / mu_e)
    };
    let mut tr = 0.0;
    for k in 0..kk {
        tr += sd_phi[k];
    }
    tr = tr / kf / PI;
    out.push(("energy_reflected_emp", r / (r + a + tr)));
    out.push(("energy_absorbed_emp", a / (r + a + tr)));
    out.push(("energy_refracted_emp", tr / (r + a + tr)));

    // temporal variability
    let mut sd_a = vec![0.0; kk];
    for k in 0..kk {
        let mut mu = 0.0;
        for t in 0..tt {
            mu += amp(m, k, t);
        }
        mu /= tf;
        let mut s = 0.0;
        for t in 0..tt {
            s += (amp(m, k, t) - mu).powi(2);
        }
        sd_a[k] = (s / (tf - 1.0)).sqrt();
    }
    let mut tv = 0.0;
    for k in 0..kk {
        tv += sd_a[k];
    }
    tv /= kf;
    out.push(("temporal_variability_mean", tv));
    let mut acc = 0.0;
    for k in 0..kk {
        acc += (sd_a[k] - tv).powi(2);
    }
    out.push(("temporal_variability_std", (acc / (kf - 1.0)).sqrt()));
    out.push((
        "temporal_variability_cv",
        if amp_mean < eps { 0.0 } else { tv / amp_mean },
    ));

    // stability
    let mut cv = vec![0.0; kk];
    for k in 0..kk {
        let mut mu = 0.0;
        for t in 0..tt {
            mu += amp(m, k, t);
        }
        mu /= tf;
        cv[k] = if mu < eps { 0.0 } else { sd_a[k] / mu };
    }
    let mut cm = 0.0;
    for k in 0..kk {
        cm += cv[k];
    }
    cm /= kf;
    out.push(("stability_mean_cv", cm));
    let mut acc = 0.0;
    for k in 0..kk {
        acc += (cv[k] - cm).powi(2);
    }
    out.push(("stability_std_cv", (acc / (kf - 1.0)).sqrt()));

    // adjacent subcarrier correlation
    let mut rho = vec![0.0; kk - 1];
    for k in 0..kk - 1 {
        let (mut ma, mut mb) = (0.0, 0.0);
        for t in 0..tt {
            ma += amp(m, k, t);
            mb += amp(m, k + 1, t);
        }
        ma /= tf;
        mb /= tf;
        let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
        for t in 0..tt {
            let da = amp(m, k, t) - ma;
            let db = amp(m, k + 1, t) - mb;
            cov += da * db;
            va += da * da;
            vb += db * db;
        }
        let sa = (va / tf).sqrt();
        let sb = (vb / tf).sqrt();
        rho[k] = if sa < eps || sb < eps { 0.0 } else { (cov / tf) / (sa * sb) };
    }
    let mut rm = 0.0;
    for k in 0..kk - 1 {
        rm += rho[k];
    }
    rm /= kf - 1.0;
    out.push(("adjacent_correlation_mean", rm));
    let mut acc = 0.0;
    for k in 0..kk - 1 {
        acc += (rho[k] - rm).powi(2);
    }
    out.push(("adjacent_correlation_std", (acc / (kf - 2.0)).sqrt()));

    // roughness
    let mut rsum = 0.0;
    for k in 0..kk - 1 {
        rsum += (hbar[k + 1] - hbar[k]).abs();
    }
    let rmean = rsum / (kf - 1.0);
    out.push(("spectral_roughness_mean", rmean));
    let mut acc = 0.0;
    for k in 0..kk - 1 {
        acc += ((hbar[k + 1] - hbar[k]).abs() - rmean).powi(2);
    }
    out.push(("spectral_roughness_std", (acc / (kf - 2.0)).sqrt()));

    // curvature
    let mut csum = 0.0;
    for k in 0..kk - 2 {
        csum += (hbar[k + 2] - 2.0 * hbar[k + 1] + hbar[k]).abs();
    }
    let cmean = csum / (kf - 2.0);
    out.push(("spectral_curvature_mean", cmean));
    let mut acc = 0.0;
    for k in 0..kk - 2 {
        acc += ((hbar[k + 2] - 2.0 * hbar[k + 1] + hbar[k]).abs() - cmean).powi(2);
    }
    out.push(("spectral_curvature_std", (acc / (kf - 3.0)).sqrt()));

    out
}
