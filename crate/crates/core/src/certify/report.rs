use std::fmt::Write as _;

/// Evidence attached to a condition.
#[derive(Debug, Clone, PartialEq)]
pub enum Witness {
    Scalar(f64),
    Vector(Vec<f64>),
    Flag(bool),
    Text(String),
}

impl From<f64> for Witness {
    fn from(v: f64) -> Self {
        Witness::Scalar(v)
    }
}

impl From<Vec<f64>> for Witness {
    fn from(v: Vec<f64>) -> Self {
        Witness::Vector(v)
    }
}

impl From<bool> for Witness {
    fn from(v: bool) -> Self {
        Witness::Flag(v)
    }
}

impl From<&str> for Witness {
    fn from(v: &str) -> Self {
        Witness::Text(v.to_string())
    }
}

impl From<String> for Witness {
    fn from(v: String) -> Self {
        Witness::Text(v)
    }
}

fn to_toml(w: &Witness) -> toml::Value {
    // TOML has no representation for non-finite floats in every reader; keep them as strings.
    let num = |v: f64| {
        if v.is_finite() {
            toml::Value::Float(v)
        } else {
            toml::Value::String(v.to_string())
        }
    };
    match w {
        Witness::Scalar(v) => num(*v),
        Witness::Vector(v) => toml::Value::Array(v.iter().map(|&x| num(x)).collect()),
        Witness::Flag(b) => toml::Value::Boolean(*b),
        Witness::Text(s) => toml::Value::String(s.clone()),
    }
}

/// One checked inequality. `margin` is the slack of the inequality as
/// written (positive when it holds).
#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub name: String,
    pub holds: bool,
    pub margin: f64,
    pub witness: Vec<(String, Witness)>,
    pub notes: Vec<String>,
}

impl Condition {
    pub fn new(name: impl Into<String>, holds: bool, margin: f64) -> Self {
        Self { name: name.into(), holds, margin, witness: Vec::new(), notes: Vec::new() }
    }

    pub fn with(mut self, key: impl Into<String>, value: impl Into<Witness>) -> Self {
        self.witness.push((key.into(), value.into()));
        self
    }

    pub fn note(mut self, text: impl Into<String>) -> Self {
        self.notes.push(text.into());
        self
    }

    pub fn get(&self, key: &str) -> Option<&Witness> {
        self.witness.iter().find(|(k, _)| k == key).map(|(_, w)| w)
    }

    pub fn scalar(&self, key: &str) -> Option<f64> {
        match self.get(key) {
            Some(Witness::Scalar(v)) => Some(*v),
            _ => None,
        }
    }

    pub fn vector(&self, key: &str) -> Option<&[f64]> {
        match self.get(key) {
            Some(Witness::Vector(v)) => Some(v),
            _ => None,
        }
    }
}

/// Ordered collection of checked conditions.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConditionReport {
    pub conditions: Vec<Condition>,
}

impl ConditionReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, c: Condition) {
        self.conditions.push(c);
    }

    pub fn extend(&mut self, other: ConditionReport) {
        self.conditions.extend(other.conditions);
    }

    pub fn get(&self, name: &str) -> Option<&Condition> {
        self.conditions.iter().find(|c| c.name == name)
    }

    pub fn holds(&self, name: &str) -> Option<bool> {
        self.get(name).map(|c| c.holds)
    }

    pub fn all_hold(&self) -> bool {
        self.conditions.iter().all(|c| c.holds)
    }

    /// Key-value text, one table per condition.
    pub fn to_toml_string(&self) -> String {
        let mut root = toml::map::Map::new();
        for c in &self.conditions {
            let mut t = toml::map::Map::new();
            t.insert("holds".into(), toml::Value::Boolean(c.holds));
            t.insert("margin".into(), to_toml(&Witness::Scalar(c.margin)));
            let mut w = toml::map::Map::new();
            for (k, v) in &c.witness {
                w.insert(k.clone(), to_toml(v));
            }
            t.insert("witness".into(), toml::Value::Table(w));
            if !c.notes.is_empty() {
                t.insert(
                    "notes".into(),
                    toml::Value::Array(c.notes.iter().map(|n| toml::Value::String(n.clone())).collect()),
                );
            }
            root.insert(c.name.clone(), toml::Value::Table(t));
        }
        toml::to_string(&toml::Value::Table(root)).expect("report serializes")
    }

    /// `condition,holds,margin` rows with a header.
    pub fn to_csv(&self, label: &str) -> String {
        let mut s = String::from("scenario,condition,holds,margin\n");
        for c in &self.conditions {
            let _ = writeln!(s, "{label},{},{},{}", c.name, c.holds, c.margin);
        }
        s
    }
}
