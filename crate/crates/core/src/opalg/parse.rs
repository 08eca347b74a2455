//! ASCII expression syntax for field-operator polynomials.
//!
//! ```text
//! poly    := term (('+' | '-') term)*
//! term    := [complex '*'] factor+ | complex
//! factor  := 'E' mode ('+' | '-') ['^' power] ['@' time]
//! complex := number | number 'i' | number ('+'|'-') number 'i' | '(' complex ')'
//! time    := 't' digits | digits
//! ```
//!
//! Factors are whitespace separated and kept in the order written.

use super::{AlgebraError, FieldFactor, Freq, Monomial, OperatorPoly, TimeLabel};
use crate::C64;

/// Parses `text` into a polynomial over modes `1..=modes`.
pub fn parse_expr(text: &str, modes: usize) -> Result<OperatorPoly, AlgebraError> {
    let mut p = Parser { src: text.as_bytes(), pos: 0, modes };
    p.poly()
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    modes: usize,
}

impl Parser<'_> {
    fn err<T>(&self, msg: impl Into<String>) -> Result<T, AlgebraError> {
        Err(AlgebraError::Syntax { pos: self.pos, msg: msg.into() })
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(b) if b.is_ascii_whitespace()) {
            self.pos += 1;
        }
    }

    fn poly(&mut self) -> Result<OperatorPoly, AlgebraError> {
        let mut monomials = Vec::new();
        self.skip_ws();
        let mut sign = 1.0;
        if let Some(b @ (b'+' | b'-')) = self.peek() {
            self.pos += 1;
            if b == b'-' {
                sign = -1.0;
            }
        }
        loop {
            let mut m = self.term()?;
            m.coeff *= sign;
            monomials.push(m);
            self.skip_ws();
            match self.peek() {
                None => break,
                Some(b'+') => sign = 1.0,
                Some(b'-') => sign = -1.0,
                Some(_) => return self.err("expected '+', '-' or end of expression"),
            }
            self.pos += 1;
        }
        Ok(OperatorPoly::from_monomials(monomials))
    }

    fn term(&mut self) -> Result<Monomial, AlgebraError> {
        self.skip_ws();
        let starts_coeff = matches!(self.peek(), Some(b) if b.is_ascii_digit() || b == b'.' || b == b'(' || b == b'i');
        if starts_coeff {
            let coeff = self.complex()?;
            self.skip_ws();
            if self.peek() == Some(b'*') {
                self.pos += 1;
                let factors = self.factors()?;
                return Ok(Monomial::new(coeff, factors));
            }
            if self.peek() == Some(b'E') {
                return self.err("expected '*' between coefficient and factors");
            }
            return Ok(Monomial::constant(coeff));
        }
        let factors = self.factors()?;
        Ok(Monomial::new(C64::new(1.0, 0.0), factors))
    }

    fn factors(&mut self) -> Result<Vec<FieldFactor>, AlgebraError> {
        let mut out = Vec::new();
        loop {
            self.skip_ws();
            if self.peek() != Some(b'E') {
                break;
            }
            out.push(self.factor()?);
        }
        if out.is_empty() {
            return self.err("expected a field factor 'E<mode><+|->'");
        }
        Ok(out)
    }

    fn digits(&mut self) -> Option<&str> {
        let start = self.pos;
        while matches!(self.peek(), Some(b) if b.is_ascii_digit()) {
            self.pos += 1;
        }
        (self.pos > start).then(|| std::str::from_utf8(&self.src[start..self.pos]).expect("ascii digits"))
    }

    fn factor(&mut self) -> Result<FieldFactor, AlgebraError> {
        self.pos += 1; // 'E'
        let mode_pos = self.pos;
        let Some(mode) = self.digits() else {
            return self.err("expected mode index after 'E'");
        };
        let mode: usize = match mode.parse() {
            Ok(m) => m,
            Err(_) => {
                self.pos = mode_pos;
                return self.err("mode index out of range");
            }
        };
        if mode == 0 || mode > self.modes {
            return Err(AlgebraError::UnknownMode { mode, modes: self.modes });
        }
        let freq = match self.peek() {
            Some(b'+') => Freq::Pos,
            Some(b'-') => Freq::Neg,
            _ => return self.err("expected '+' or '-' directly after the mode index"),
        };
        self.pos += 1;
        let mut factor = FieldFactor::new(mode, freq, 1);
        if self.peek() == Some(b'^') {
            self.pos += 1;
            if self.peek() == Some(b'-') {
                return Err(AlgebraError::NegativePower { pos: self.pos });
            }
            let Some(power) = self.digits() else {
                return self.err("expected power after '^'");
            };
            factor.power = match power.parse() {
                Ok(p) => p,
                Err(_) => return self.err("power out of range"),
            };
        }
        if self.peek() == Some(b'@') {
            self.pos += 1;
            if self.peek() == Some(b't') {
                self.pos += 1;
            }
            let Some(label) = self.digits() else {
                return self.err("expected time label 't<k>' after '@'");
            };
            factor.time = match label.parse() {
                Ok(t) => TimeLabel(t),
                Err(_) => return self.err("time label out of range"),
            };
        }
        if matches!(self.peek(), Some(b) if b.is_ascii_alphanumeric() || b == b'^' || b == b'@') {
            return self.err("unexpected character after factor");
        }
        Ok(factor)
    }

    fn number(&mut self) -> Option<f64> {
        let start = self.pos;
        while matches!(self.peek(), Some(b) if b.is_ascii_digit()) {
            self.pos += 1;
        }
        if self.peek() == Some(b'.') {
            self.pos += 1;
            while matches!(self.peek(), Some(b) if b.is_ascii_digit()) {
                self.pos += 1;
            }
        }
        let mantissa_end = self.pos;
        if mantissa_end == start || &self.src[start..mantissa_end] == b"." {
            self.pos = start;
            return None;
        }
        // lowercase exponent only; 'E' starts a field factor
        if self.peek() == Some(b'e') {
            let save = self.pos;
            self.pos += 1;
            if let Some(b'+' | b'-') = self.peek() {
                self.pos += 1;
            }
            if self.digits().is_none() {
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii number");
        match text.parse() {
            Ok(v) => Some(v),
            Err(_) => {
                self.pos = start;
                None
            }
        }
    }

    /// A real or imaginary literal: `x`, `xi` or a bare `i`.
    fn signed_part(&mut self) -> Option<(f64, bool)> {
        if self.peek() == Some(b'i') {
            self.pos += 1;
            return Some((1.0, true));
        }
        let v = self.number()?;
        if self.peek() == Some(b'i') {
            self.pos += 1;
            return Some((v, true));
        }
        Some((v, false))
    }

    fn complex(&mut self) -> Result<C64, AlgebraError> {
        if self.peek() == Some(b'(') {
            self.pos += 1;
            self.skip_ws();
            let mut sign = 1.0;
            if let Some(b @ (b'+' | b'-')) = self.peek() {
                self.pos += 1;
                if b == b'-' {
                    sign = -1.0;
                }
                self.skip_ws();
            }
            let z = self.complex_body()?;
            self.skip_ws();
            if self.peek() != Some(b')') {
                return self.err("expected ')'");
            }
            self.pos += 1;
            return Ok(z * sign);
        }
        self.complex_body()
    }

    fn complex_body(&mut self) -> Result<C64, AlgebraError> {
        let Some((first, imag)) = self.signed_part() else {
            return self.err("expected a number");
        };
        if imag {
            return Ok(C64::new(0.0, first));
        }
        // optional imaginary part "a+bi"; backtrack when the sign belongs to
        // the next term
        let save = self.pos;
        self.skip_ws();
        if let Some(b @ (b'+' | b'-')) = self.peek() {
            self.pos += 1;
            self.skip_ws();
            if let Some((second, true)) = self.signed_part() {
                let s = if b == b'-' { -1.0 } else { 1.0 };
                return Ok(C64::new(first, s * second));
            }
        }
        self.pos = save;
        Ok(C64::new(first, 0.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_factor() {
        let p = parse_expr("E1+", 1).unwrap();
        assert_eq!(p.monomials().len(), 1);
        let m = &p.monomials()[0];
        assert_eq!(m.coeff, C64::new(1.0, 0.0));
        assert_eq!(m.factors, vec![FieldFactor::new(1, Freq::Pos, 1)]);
    }

    #[test]
    fn coefficient_and_written_order() {
        let p = parse_expr("2.0 * E2-^2 E1+^3", 2).unwrap();
        let m = &p.monomials()[0];
        assert_eq!(m.coeff, C64::new(2.0, 0.0));
        assert_eq!(m.factors, vec![FieldFactor::new(2, Freq::Neg, 2), FieldFactor::new(1, Freq::Pos, 3)]);
    }

    #[test]
    fn no_reordering_on_parse() {
        let p = parse_expr("E1+ E1-", 1).unwrap();
        let freqs: Vec<Freq> = p.monomials()[0].factors.iter().map(|f| f.freq).collect();
        assert_eq!(freqs, vec![Freq::Pos, Freq::Neg]);
    }

    #[test]
    fn complex_literals() {
        let p = parse_expr("1.5-2i * E1+ + (0.5+1e-1i)*E1- + 3i*E1+ - 2", 1).unwrap();
        let coeffs: Vec<C64> = p.monomials().iter().map(|m| m.coeff).collect();
        assert_eq!(
            coeffs,
            vec![
                C64::new(1.5, -2.0),
                C64::new(0.5, 0.1),
                C64::new(0.0, 3.0),
                C64::new(-2.0, 0.0),
            ]
        );
        assert_eq!(parse_expr("i*E1-", 1).unwrap().monomials()[0].coeff, C64::new(0.0, 1.0));
        // a sign followed by an imaginary literal binds into the coefficient
        assert_eq!(parse_expr("2 + i*E1-", 1).unwrap().monomials()[0].coeff, C64::new(2.0, 1.0));
    }

    #[test]
    fn sign_after_real_constant_starts_new_term() {
        let p = parse_expr("2 + E1- E1+", 1).unwrap();
        assert_eq!(p.monomials().len(), 2);
        assert!(p.monomials()[0].factors.is_empty());
    }

    #[test]
    fn time_labels() {
        let p = parse_expr("E1-@t2 E2+^3@7", 2).unwrap();
        let f = &p.monomials()[0].factors;
        assert_eq!(f[0].time, TimeLabel(2));
        assert_eq!(f[1].time, TimeLabel(7));
        assert_eq!(f[1].power, 3);
    }

    #[test]
    fn errors() {
        assert!(matches!(parse_expr("E3+", 2), Err(AlgebraError::UnknownMode { mode: 3, modes: 2 })));
        assert!(matches!(parse_expr("E0+", 2), Err(AlgebraError::UnknownMode { mode: 0, .. })));
        assert!(matches!(parse_expr("E1+^-2", 1), Err(AlgebraError::NegativePower { pos: 4 })));
        assert!(matches!(parse_expr("E1", 1), Err(AlgebraError::Syntax { pos: 2, .. })));
        assert!(matches!(parse_expr("2 E1+", 1), Err(AlgebraError::Syntax { .. })));
        assert!(matches!(parse_expr("E1+ *", 1), Err(AlgebraError::Syntax { .. })));
        assert!(matches!(parse_expr("", 1), Err(AlgebraError::Syntax { pos: 0, .. })));
        assert!(matches!(parse_expr("E1+ +", 1), Err(AlgebraError::Syntax { .. })));
    }
}
