//! Canonical layout for parsed rule files. Re-parsing the output gives the
//! same tree and the same token sequence as the original source.

use std::fmt;

use super::ast::*;

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let star = if self.template { "*" } else { "" };
        if self.angled {
            write!(f, "<{}{star}>", self.name)
        } else {
            write!(f, "{}{star}", self.name)
        }
    }
}

impl fmt::Display for EventRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)?;
        if self.call_parens {
            f.write_str("()")?;
        }
        Ok(())
    }
}

fn write_set(f: &mut fmt::Formatter<'_>, set: &RuleSet, indent: &str) -> fmt::Result {
    write!(f, "{indent}rules")?;
    if !set.targets.is_empty() {
        let targets: Vec<String> = set.targets.iter().map(Target::to_string).collect();
        write!(f, " for {}", targets.join(", "))?;
    }
    if set.mode_explicit {
        write!(f, " {}", set.mode)?;
        if let Some(stop) = &set.stop_event {
            write!(f, " until {stop}")?;
        }
    }
    writeln!(f, " {{")?;
    for rule in &set.rules {
        write_rule(f, rule, &format!("{indent}    "))?;
    }
    writeln!(f, "{indent}}}")
}

fn write_rule(f: &mut fmt::Formatter<'_>, rule: &Rule, indent: &str) -> fmt::Result {
    write!(f, "{indent}When {}", rule.event)?;
    if rule.braced {
        write!(f, " {{")?;
    }
    if let Some(c) = &rule.condition {
        write!(f, " If {c}")?;
    }
    writeln!(f, " THEN DO")?;
    for a in &rule.actions {
        write!(f, "{indent}    {a}")?;
        if a.terminated {
            f.write_str(";")?;
        }
        writeln!(f)?;
    }
    if rule.braced {
        writeln!(f, "{indent}}}")?;
    }
    Ok(())
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_rule(f, self, "")
    }
}

impl fmt::Display for RuleSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_set(f, self, "")
    }
}

impl fmt::Display for RuleFile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.wrapped {
            writeln!(f, "Begin {{")?;
        }
        let indent = if self.wrapped { "    " } else { "" };
        for set in &self.sets {
            write_set(f, set, indent)?;
        }
        if self.wrapped {
            writeln!(f, "}} End")?;
        }
        Ok(())
    }
}
