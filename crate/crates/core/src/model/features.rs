use super::ModelError;

/// Output length of the degree-2 expansion of `d` features: `d(d+3)/2`.
pub fn polynomial_len(d: usize) -> usize {
    d * (d + 3) / 2
}

/// Degree-2 polynomial expansion without the constant term.
///
/// Output order: the original features, then `x[i] * x[j]` for `i <= j` in
/// row-major order, so `[a, b]` becomes `[a, b, a², ab, b²]`.
pub fn expand_polynomial(features: &[f64], degree: usize) -> Result<Vec<f64>, ModelError> {
    if degree != 2 {
        return Err(ModelError::UnsupportedDegree(degree));
    }
    let d = features.len();
    let mut out = Vec::with_capacity(polynomial_len(d));
    out.extend_from_slice(features);
    for i in 0..d {
        for j in i..d {
            out.push(features[i] * features[j]);
        }
    }
    Ok(out)
}

/// Column names matching [`expand_polynomial`]'s output order.
pub fn expand_polynomial_names(names: &[String], degree: usize) -> Result<Vec<String>, ModelError> {
    if degree != 2 {
        return Err(ModelError::UnsupportedDegree(degree));
    }
    let mut out: Vec<String> = names.to_vec();
    for i in 0..names.len() {
        for j in i..names.len() {
            if i == j {
                out.push(format!("{}^2", names[i]));
            } else {
                out.push(format!("{}*{}", names[i], names[j]));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn thirty_two_volumes_give_560_features() {
        let x: Vec<f64> = (0..32).map(|i| i as f64 * 0.1).collect();
        assert_eq!(expand_polynomial(&x, 2).unwrap().len(), 560);
    }

    #[test]
    fn two_features_order() {
        let out = expand_polynomial(&[2.0, 3.0], 2).unwrap();
        assert_eq!(out, vec![2.0, 3.0, 4.0, 6.0, 9.0]);
    }

    #[test]
    fn zero_input() {
        assert_eq!(expand_polynomial(&[0.0; 3], 2).unwrap(), vec![0.0; 9]);
    }

    #[test]
    fn unsupported_degree() {
        assert_eq!(
            expand_polynomial(&[1.0], 3).unwrap_err(),
            ModelError::UnsupportedDegree(3)
        );
    }

    #[test]
    fn names_follow_values() {
        let names: Vec<String> = vec!["a".into(), "b".into()];
        assert_eq!(
            expand_polynomial_names(&names, 2).unwrap(),
            vec!["a", "b", "a^2", "a*b", "b^2"]
        );
    }

    proptest! {
        #[test]
        fn length_formula(d in 1usize..=64) {
            let x = vec![1.5; d];
            prop_assert_eq!(expand_polynomial(&x, 2).unwrap().len(), d * (d + 3) / 2);
        }
    }
}
