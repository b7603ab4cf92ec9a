//! Grid specifications: `a,b,c`, `lin:start:stop:n` or `log:start:stop:n`.

use std::str::FromStr;

#[derive(Debug, Clone, PartialEq)]
pub struct Grid(pub Vec<f64>);

impl FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        let values = if let Some(rest) = s.strip_prefix("lin:").or_else(|| s.strip_prefix("log:")) {
            let parts: Vec<&str> = rest.split(':').collect();
            let [start, stop, n] = parts.as_slice() else {
                return Err(format!("expected {}start:stop:n, got `{s}`", &s[..4]));
            };
            let start: f64 = start.parse().map_err(|_| format!("bad start `{start}`"))?;
            let stop: f64 = stop.parse().map_err(|_| format!("bad stop `{stop}`"))?;
            let n: usize = n.parse().map_err(|_| format!("bad point count `{n}`"))?;
            if n < 2 {
                return Err("a range grid needs at least 2 points".into());
            }
            let frac = |i: usize| i as f64 / (n - 1) as f64;
            if s.starts_with("log:") {
                if !(start > 0.0 && stop > 0.0) {
                    return Err("log grid bounds must be positive".into());
                }
                let (a, b) = (start.ln(), stop.ln());
                (0..n).map(|i| (a + (b - a) * frac(i)).exp()).collect()
            } else {
                (0..n).map(|i| start + (stop - start) * frac(i)).collect()
            }
        } else {
            s.split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| format!("bad grid value `{v}`"))
                })
                .collect::<Result<Vec<_>, _>>()?
        };
        if values.is_empty() {
            return Err("empty grid".into());
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err("grid values must be finite".into());
        }
        if values.windows(2).any(|w| w[1] <= w[0]) {
            return Err("grid must be strictly ascending".into());
        }
        Ok(Grid(values))
    }
}
