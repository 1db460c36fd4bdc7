//! Flag value grammars shared by every subcommand.

use knoblab::AttributeVector;

/// `size,porosity,dispersity,facetness`, each in `[0, 1]`.
pub fn attrs(text: &str) -> Result<AttributeVector, String> {
    let values = text
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| format!("not a number: {p:?}")))
        .collect::<Result<Vec<_>, _>>()?;
    if values.len() != 4 {
        return Err(format!(
            "expected 4 comma-separated values (size,porosity,dispersity,facetness), got {}",
            values.len()
        ));
    }
    AttributeVector::from_slice(&values).map_err(|e| e.to_string())
}

/// `start:stop:count`, inclusive of both ends.
/// Parsed `start:stop:count` grid. A newtype so clap takes the whole list as one value.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec(pub Vec<f64>);

pub fn grid(text: &str) -> Result<GridSpec, String> {
    let parts: Vec<&str> = text.split(':').collect();
    let [start, stop, count] = parts.as_slice() else {
        return Err(format!("expected start:stop:count, got {text:?}"));
    };
    let start: f64 = start.trim().parse().map_err(|_| format!("bad grid start {start:?}"))?;
    let stop: f64 = stop.trim().parse().map_err(|_| format!("bad grid stop {stop:?}"))?;
    let count: usize = count.trim().parse().map_err(|_| format!("bad grid count {count:?}"))?;
    if count == 0 {
        return Err("grid count must be at least 1".into());
    }
    if count > 1 && !(stop > start) {
        return Err(format!("grid stop must exceed start, got {start}:{stop}"));
    }
    Ok(GridSpec(knoblab::explain::linear_grid(start, stop, count)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn attrs_grammar() {
        assert_eq!(attrs("0.1, 0.2,0.3,0.4").unwrap().as_array(), [0.1, 0.2, 0.3, 0.4]);
        assert!(attrs("0.1,0.2,0.3").unwrap_err().contains("expected 4"));
        assert!(attrs("0.1,0.2,0.3,x").is_err());
        assert!(attrs("0.1,1.2,0.3,0.4").is_err());
    }

    #[test]
    fn grid_grammar() {
        assert_eq!(grid("0.1:0.9:9").unwrap().0.len(), 9);
        assert_eq!(grid("0.5:0.5:1").unwrap().0, [0.5]);
        assert!(grid("0.1:0.9").is_err());
        assert!(grid("0.9:0.1:3").is_err());
        assert!(grid("0:1:0").is_err());
    }
}
