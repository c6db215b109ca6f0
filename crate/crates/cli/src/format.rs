/// Formats `x` with six significant digits.
pub fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs().log10().floor() as i32;
    if (-5..=9).contains(&magnitude) {
        format!("{:.*}", (5 - magnitude).max(0) as usize, x)
    } else {
        format!("{x:.5e}")
    }
}

/// Parses `start:stop:step` (inclusive of `stop`) or a comma-separated list.
pub fn parse_grid(s: &str) -> Result<Vec<f64>, String> {
    let number = |t: &str| t.trim().parse::<f64>().map_err(|_| format!("'{t}' is not a number"));
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [start, stop, step] => {
            let (start, stop, step) = (number(start)?, number(stop)?, number(step)?);
            if !(step > 0.0) || !(stop >= start) {
                return Err(format!("grid '{s}' needs step > 0 and stop >= start"));
            }
            let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
            if count > 1_000_000 {
                return Err(format!("grid '{s}' has more than 10^6 points"));
            }
            Ok((0..count).map(|i| start + i as f64 * step).collect())
        }
        [_] => s.split(',').map(number).collect(),
        _ => Err(format!("grid '{s}' must be start:stop:step or a comma list")),
    }
}
