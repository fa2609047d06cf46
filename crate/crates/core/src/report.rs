use std::fmt;

/// Formats a float with 12 significant digits in scientific notation.
pub fn sig12(x: f64) -> String {
    if x.is_finite() {
        format!("{:.11e}", x)
    } else {
        format!("{}", x)
    }
}

/// One evaluated condition: a name, the numeric left side when there is one,
/// a short human-readable detail, and the verdict.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: Option<f64>,
    pub detail: String,
    pub pass: bool,
}

/// Collection of checks. Failing conditions are data, not errors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    pub title: String,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
}

impl Report {
    pub fn new(title: impl Into<String>) -> Self {
        Report {
            title: title.into(),
            ..Default::default()
        }
    }

    pub fn check(
        &mut self,
        name: impl Into<String>,
        value: Option<f64>,
        detail: impl Into<String>,
        pass: bool,
    ) {
        self.checks.push(Check {
            name: name.into(),
            value,
            detail: detail.into(),
            pass,
        });
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "== {} ==", self.title)?;
        for c in &self.checks {
            let tag = if c.pass { "PASS" } else { "FAIL" };
            match c.value {
                Some(v) => writeln!(f, "[{tag}] {:<28} {:>20}  {}", c.name, sig12(v), c.detail)?,
                None => writeln!(f, "[{tag}] {:<28} {:>20}  {}", c.name, "-", c.detail)?,
            }
        }
        for n in &self.notes {
            writeln!(f, "note: {n}")?;
        }
        Ok(())
    }
}
