use std::collections::BTreeMap;

use super::expr::{Expr, Function, Module, Param, Type};
use crate::graph_model::{ComputationalGraph, Node, NodeId, NodeInfoTable, TensorValue};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LoweringError {
    #[error("ERROR lowering at function {func}: input {input} has no inferred type")]
    UntypedFunctionInput { func: NodeId, input: NodeId },
    #[error("ERROR lowering at node {0}: call does not reference a function output")]
    MalformedCall(NodeId),
    #[error("ERROR lowering at node {node}: operand {operand} is not a tensor")]
    NotATensor { node: NodeId, operand: NodeId },
}

/// Local name of a graph node.
pub fn node_var(id: NodeId) -> String {
    format!("n{}", id.0)
}

/// Global name of a function node.
pub fn func_name(id: NodeId) -> String {
    format!("f{}", id.0)
}

/// Main's inputs keyed by parameter name.
pub fn graph_inputs(values: &BTreeMap<NodeId, TensorValue>) -> BTreeMap<String, TensorValue> {
    values.iter().map(|(id, v)| (node_var(*id), v.clone())).collect()
}

fn wrap_lets(lets: Vec<(String, Option<Type>, Expr)>, result: Expr) -> Expr {
    lets.into_iter().rev().fold(result, |body, (var, ty, value)| Expr::Let {
        var,
        ty,
        value: Box::new(value),
        body: Box::new(body),
    })
}

fn results(ids: &[NodeId]) -> Expr {
    match ids {
        [single] => Expr::var(node_var(*single)),
        _ => Expr::Tuple(ids.iter().map(|i| Expr::var(node_var(*i))).collect()),
    }
}

/// Lowers a graph into a module. Every variable becomes a parameter of
/// main, every other tensor node a let binding, and main returns the sinks.
/// Function nodes become globals whose parameters are the function inputs
/// followed by the body's variables.
pub fn lower(g: &ComputationalGraph, t: &NodeInfoTable) -> Result<Module, LoweringError> {
    let ty_of = |id: NodeId| t.tensor_type(id).cloned().map(Type::Tensor);
    let mut module = Module::new();
    let mut main_params = Vec::new();
    let mut main_lets = Vec::new();
    let mut func_params: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();

    for (id, node) in g.iter() {
        match node {
            Node::Variable { .. } => {
                main_params.push(Param::new(node_var(id), ty_of(id).expect("variables are typed")));
            }
            Node::Constant { value } => main_lets.push((node_var(id), ty_of(id), Expr::Const(value.clone()))),
            Node::Operator { op, parents } => {
                if let Some(p) = parents.iter().find(|p| !g.node(**p).is_tensor()) {
                    return Err(LoweringError::NotATensor { node: id, operand: *p });
                }
                let args = parents.iter().map(|p| Expr::var(node_var(*p))).collect();
                main_lets.push((node_var(id), ty_of(id), Expr::prim(*op, args)));
            }
            Node::Function { body, inputs, outputs } => {
                let mut params = Vec::new();
                let mut order = Vec::new();
                for i in inputs {
                    let ty = ty_of(*i).ok_or(LoweringError::UntypedFunctionInput { func: id, input: *i })?;
                    params.push(Param::new(node_var(*i), ty));
                    order.push(*i);
                }
                let mut lets = Vec::new();
                for b in body {
                    match g.node(*b) {
                        Node::Variable { .. } => {
                            params.push(Param::new(node_var(*b), ty_of(*b).expect("variables are typed")));
                            order.push(*b);
                        }
                        Node::Constant { value } => lets.push((node_var(*b), ty_of(*b), Expr::Const(value.clone()))),
                        Node::Operator { op, parents } => {
                            let args = parents.iter().map(|p| Expr::var(node_var(*p))).collect();
                            lets.push((node_var(*b), ty_of(*b), Expr::prim(*op, args)));
                        }
                        Node::Function { .. } | Node::Call { .. } => {
                            return Err(LoweringError::NotATensor { node: id, operand: *b })
                        }
                    }
                }
                let f = Function::new(params, wrap_lets(lets, results(outputs)));
                module.functions.insert(func_name(id), f);
                func_params.insert(id, order);
            }
            Node::Call { func, output } => {
                let (Some(order), Node::Function { outputs, .. }) = (func_params.get(func), g.node(*func)) else {
                    return Err(LoweringError::MalformedCall(id));
                };
                let index = outputs.iter().position(|o| o == output).ok_or(LoweringError::MalformedCall(id))?;
                let args = order.iter().map(|a| Expr::var(node_var(*a))).collect();
                let call = Expr::global_call(func_name(*func), args);
                let value = if outputs.len() > 1 { Expr::proj(call, index) } else { call };
                main_lets.push((node_var(id), ty_of(id), value));
            }
        }
    }
    let main = Function::new(main_params, wrap_lets(main_lets, results(&g.sinks())));
    module.functions.insert(super::MAIN.to_string(), main);
    Ok(module)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph_model::{from_text, NodeInfoTable};
    use crate::mini_ir::text::print_module;
    use crate::mini_ir::typeck::infer_types;

    #[test]
    fn single_constant() {
        let g = from_text("0 constant int32 () [5]").unwrap();
        let m = lower(&g, &NodeInfoTable::rebuild(&g)).unwrap();
        assert_eq!(print_module(&m), "def @main() {\n  let %n0: int32() = const int32 () [5];\n  %n0\n}\n");
    }

    #[test]
    fn function_and_call() {
        let g = from_text(
            "0 variable int32 ()\n1 constant int32 () [3]\n2 operator add 0 1\n3 function body=2 inputs=0,1 outputs=2\n4 call 3 2\n",
        )
        .unwrap();
        let m = lower(&g, &NodeInfoTable::rebuild(&g)).unwrap();
        assert_eq!(m.functions.len(), 2);
        let text = print_module(&m);
        assert!(text.contains("def @f3(%n0: int32(), %n1: int32()) {"), "{text}");
        assert!(text.contains("let %n4: int32() = @f3(%n0, %n1);"), "{text}");
        infer_types(&m).unwrap();
    }

    #[test]
    fn level0_sqrt_lowers_then_fails_typing() {
        let g = from_text("0 constant int16 () [4]\n1 operator sqrt 0").unwrap();
        let m = lower(&g, &NodeInfoTable::rebuild(&g)).unwrap();
        assert!(infer_types(&m).is_err());
    }

    #[test]
    fn untyped_function_input() {
        let g = from_text(
            "0 constant int16 () [4]\n1 constant int8 () [1]\n2 operator add 0 1\n3 operator negative 2\n4 function body=3 inputs=2 outputs=3\n",
        )
        .unwrap();
        let err = lower(&g, &NodeInfoTable::rebuild(&g)).unwrap_err();
        assert_eq!(err, LoweringError::UntypedFunctionInput { func: NodeId(4), input: NodeId(2) });
    }
}
