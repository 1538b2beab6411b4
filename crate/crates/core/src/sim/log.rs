use std::io::{self, Write};

use serde::{Deserialize, Serialize};

/// One logged instant. Inputs are the values applied from `t` onward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub t: f64,
    pub x: Vec<f64>,
    pub x_n: Vec<f64>,
    pub x_hat: Vec<f64>,
    /// `x̂ - x`
    pub x_tilde: Vec<f64>,
    pub sigma_hat: Vec<f64>,
    /// `B†σ̂`, the estimate of the matched uncertainty.
    pub matched_estimate: Vec<f64>,
    pub u_opt: Vec<f64>,
    pub u_a: Vec<f64>,
    pub u: Vec<f64>,
    pub f: Vec<f64>,
    pub w: Vec<f64>,
    pub y: Vec<f64>,
    pub r: Vec<f64>,
}

/// Uniformly sampled closed-loop trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLog {
    pub dt: f64,
    pub records: Vec<Record>,
}

impl TrajectoryLog {
    pub fn new(dt: f64) -> Self {
        Self { dt, records: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn push(&mut self, r: Record) {
        self.records.push(r);
    }

    pub fn last(&self) -> Option<&Record> {
        self.records.last()
    }

    /// Records with `t` in `[start, end]`.
    pub fn window(&self, start: f64, end: f64) -> impl Iterator<Item = &Record> {
        let eps = 1e-9 * self.dt;
        self.records.iter().filter(move |r| r.t >= start - eps && r.t <= end + eps)
    }

    /// Column names in output order.
    pub fn header(&self) -> Vec<String> {
        let Some(first) = self.records.first() else {
            return vec!["t".into()];
        };
        let mut h = vec!["t".to_string()];
        let mut group = |prefix: &str, len: usize| {
            h.extend((1..=len).map(|i| format!("{prefix}{i}")));
        };
        group("x", first.x.len());
        group("xn", first.x_n.len());
        group("xhat", first.x_hat.len());
        group("sigma", first.sigma_hat.len());
        group("uopt", first.u_opt.len());
        group("ua", first.u_a.len());
        group("u", first.u.len());
        group("f", first.f.len());
        if first.w.len() <= 1 {
            h.push("w".into());
        } else {
            h.extend((1..=first.w.len()).map(|i| format!("w{i}")));
        }
        let mut group = |prefix: &str, len: usize| {
            h.extend((1..=len).map(|i| format!("{prefix}{i}")));
        };
        group("y", first.y.len());
        group("r", first.r.len());
        h
    }

    /// CSV with columns `t, x*, xn*, xhat*, sigma*, uopt*, ua*, u*, f*, w, y*, r*`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{}", self.header().join(","))?;
        let mut line = String::new();
        for r in &self.records {
            line.clear();
            line.push_str(&fmt(r.t));
            let w_fallback = [0.0];
            let w: &[f64] = if r.w.is_empty() { &w_fallback } else { &r.w };
            for group in [&r.x, &r.x_n, &r.x_hat, &r.sigma_hat, &r.u_opt, &r.u_a, &r.u, &r.f] {
                for v in group {
                    line.push(',');
                    line.push_str(&fmt(*v));
                }
            }
            for v in w.iter().chain(&r.y).chain(&r.r) {
                line.push(',');
                line.push_str(&fmt(*v));
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.10e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(t: f64) -> Record {
        Record {
            t,
            x: vec![1.0, 2.0, 3.0],
            x_n: vec![0.0; 3],
            x_hat: vec![0.0; 3],
            x_tilde: vec![0.0; 3],
            sigma_hat: vec![0.0; 3],
            matched_estimate: vec![0.0; 2],
            u_opt: vec![0.0; 2],
            u_a: vec![0.0; 2],
            u: vec![0.0; 2],
            f: vec![0.0; 2],
            w: vec![0.5],
            y: vec![0.0; 2],
            r: vec![9.0, 6.5],
        }
    }

    #[test]
    fn header_has_documented_order() {
        let mut log = TrajectoryLog::new(0.1);
        log.push(record(0.0));
        let want = "t,x1,x2,x3,xn1,xn2,xn3,xhat1,xhat2,xhat3,sigma1,sigma2,sigma3,uopt1,uopt2,ua1,ua2,u1,u2,f1,f2,w,y1,y2,r1,r2";
        assert_eq!(log.header().join(","), want);
        let csv = log.to_csv_string();
        let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
        assert_eq!(row.len(), 26);
        assert_eq!(row[1].parse::<f64>().unwrap(), 1.0);
        assert_eq!(row[21].parse::<f64>().unwrap(), 0.5);
        assert_eq!(row[25].parse::<f64>().unwrap(), 6.5);
    }

    #[test]
    fn window_is_inclusive() {
        let mut log = TrajectoryLog::new(0.1);
        for k in 0..=10 {
            log.push(record(k as f64 * 0.1));
        }
        assert_eq!(log.window(0.2, 0.5).count(), 4);
    }
}
