//! Co-execution of a plan with a simulated or live human.

use super::{human_trajectory, HumanArchetype, WorldSpec};
use crate::domain::{simulate_timeline, Agent, PlanResult, Step, TaskId, TaskSet, Trajectory};
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::live::{Frame, LiveChannel, TaskEventKind};
use crate::SimRng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub task: TaskId,
    pub agent: Agent,
    pub start: f64,
    pub finish: f64,
}

/// What one executed cycle revealed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleObservation {
    pub human_durations: BTreeMap<TaskId, f64>,
    pub human_trajectories: BTreeMap<TaskId, Trajectory>,
    pub robot_trajectories: BTreeMap<TaskId, Trajectory>,
    /// Ordered by task id.
    pub tasks: Vec<TaskRecord>,
    pub makespan: f64,
    pub min_distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobotState {
    pub position: Point,
    pub task: Option<TaskId>,
    /// Finish times of robot tasks completed by `now`, by task id.
    pub finished: Vec<Option<f64>>,
    pub done: bool,
}

/// Position along an out-and-back traversal of `path` at fraction `u`.
pub fn round_trip_position(path: &[Point], u: f64) -> Point {
    if path.len() < 2 {
        return path[0];
    }
    let u = u.clamp(0.0, 1.0);
    let along = if u <= 0.5 { 2.0 * u } else { 2.0 - 2.0 * u };
    let x = along * (path.len() - 1) as f64;
    let i = (x.floor() as usize).min(path.len() - 2);
    path[i].lerp(path[i + 1], x - i as f64)
}

/// Robot pose at `now` given the human finish times known so far.
///
/// Each robot step starts as soon as the robot is free and every task it
/// depends on has finished; an unresolved dependency keeps the robot at
/// home.
pub fn robot_state(
    plan: &PlanResult,
    task_set: &TaskSet,
    home: Point,
    human_finish: &[Option<f64>],
    now: f64,
) -> RobotState {
    let n = task_set.len();
    let mut known: Vec<Option<f64>> = (0..n)
        .map(|i| human_finish.get(i).copied().flatten().filter(|f| *f <= now))
        .collect();
    let mut finished = vec![None; n];
    let idle = |finished: Vec<Option<f64>>| RobotState {
        position: home,
        task: None,
        finished,
        done: false,
    };
    let mut free = 0.0f64;
    for step in &plan.genome.robot {
        match *step {
            Step::Do(j) => {
                let mut ready = free;
                for p in task_set.predecessors(j) {
                    match known[p.0] {
                        Some(f) => ready = ready.max(f),
                        None => return idle(finished),
                    }
                }
                let traj = &plan.robot_trajectories[&j];
                let duration = traj.duration();
                if now < ready {
                    return idle(finished);
                }
                if now < ready + duration {
                    return RobotState {
                        position: round_trip_position(traj.active_points(), (now - ready) / duration),
                        task: Some(j),
                        finished,
                        done: false,
                    };
                }
                free = ready + duration;
                known[j.0] = Some(free);
                finished[j.0] = Some(free);
            }
            Step::Wait(i) => match known[i.0] {
                Some(f) => free = free.max(f),
                None => return idle(finished),
            },
        }
    }
    RobotState {
        position: home,
        task: None,
        finished,
        done: now >= free,
    }
}

fn robot_durations(plan: &PlanResult, n: usize) -> Vec<f64> {
    let mut d = vec![0.0; n];
    for (t, traj) in &plan.robot_trajectories {
        d[t.0] = traj.duration();
    }
    d
}

/// Execute `plan` with a scripted human and record the outcome. Proximity
/// is sampled every `tick` seconds.
pub fn deploy_archetype(
    plan: &PlanResult,
    world: &WorldSpec,
    archetype: HumanArchetype,
    tick: f64,
    rng: &mut SimRng,
) -> Result<CycleObservation> {
    if !plan.feasible {
        return Err(Error::InfeasiblePlan);
    }
    let task_set = world.task_set()?;
    let n = task_set.len();
    let mut human = vec![0.0; n];
    let mut paths = BTreeMap::new();
    for t in plan.genome.tasks_of(Agent::Human) {
        let (path, d) = archetype.realize(world, t, rng)?;
        human[t.0] = d;
        paths.insert(t, path);
    }
    let robot = robot_durations(plan, n);
    let tl = simulate_timeline(&plan.genome, &task_set, &human, &robot)?;
    let human_finish: Vec<Option<f64>> = (0..n)
        .map(|i| (tl.times[i].agent == Agent::Human).then_some(tl.times[i].finish))
        .collect();
    let human_home = world.homes.human.center;
    let robot_home = world.homes.robot.center;

    let mut min_distance = f64::INFINITY;
    let steps = (tl.makespan / tick).ceil() as usize;
    for k in 0..=steps {
        let now = (k as f64 * tick).min(tl.makespan);
        let h = paths
            .iter()
            .find(|(t, _)| {
                let (s, f) = tl.interval(**t);
                s <= now && now < f
            })
            .map(|(t, p)| {
                let (s, f) = tl.interval(*t);
                round_trip_position(p, (now - s) / (f - s))
            })
            .unwrap_or(human_home);
        let r = robot_state(plan, &task_set, robot_home, &human_finish, now).position;
        min_distance = min_distance.min(h.dist(r));
    }

    let mut human_trajectories = BTreeMap::new();
    let mut human_durations = BTreeMap::new();
    for (t, p) in &paths {
        human_durations.insert(*t, human[t.0]);
        human_trajectories.insert(*t, human_trajectory(p, human[t.0])?);
    }
    Ok(CycleObservation {
        human_durations,
        human_trajectories,
        robot_trajectories: plan.robot_trajectories.clone(),
        tasks: (0..n)
            .map(|i| TaskRecord {
                task: TaskId(i),
                agent: tl.times[i].agent,
                start: tl.times[i].start,
                finish: tl.times[i].finish,
            })
            .collect(),
        makespan: tl.makespan,
        min_distance,
    })
}

fn violation(channel: &mut dyn LiveChannel, message: String) -> Error {
    // the session is being torn down; a failed send changes nothing
    let _ = channel.send(&Frame::error("protocol", message.clone()));
    Error::LiveAborted(message)
}

/// Execute `plan` against a live participant driven by `human_move` frames.
///
/// A human task starts when the participant leaves the home zone and is
/// identified when they reach one of their pending objects; it finishes on
/// return home. The recorded path is the outbound leg. Returns
/// [`Error::LiveAborted`] if the peer disconnects or breaks protocol.
pub fn deploy_live(
    plan: &PlanResult,
    world: &WorldSpec,
    channel: &mut dyn LiveChannel,
) -> Result<CycleObservation> {
    if !plan.feasible {
        return Err(Error::InfeasiblePlan);
    }
    let task_set = world.task_set()?;
    let n = task_set.len();
    let pending_human: BTreeSet<TaskId> = plan.genome.tasks_of(Agent::Human).collect();
    let robot_home = world.homes.robot.center;
    let mut human_finish: Vec<Option<f64>> = vec![None; n];
    let mut human_start: Vec<Option<f64>> = vec![None; n];
    let mut human_durations = BTreeMap::new();
    let mut human_trajectories = BTreeMap::new();

    let mut clock = 0.0f64;
    let mut last = world.homes.human.center;
    let mut at_home = true;
    let mut outing: Option<(f64, Vec<Point>, Option<TaskId>)> = None;
    let mut min_distance = f64::INFINITY;
    loop {
        let frame = match channel.recv() {
            Ok(Some(f)) => f,
            Ok(None) => return Err(Error::LiveAborted("client disconnected mid-cycle".into())),
            Err(Error::LiveAborted(m)) => return Err(violation(channel, m)),
            Err(e) => return Err(e),
        };
        let (position, timestamp) = match frame {
            Frame::HumanMove { position, timestamp } => (position, timestamp),
            other => {
                return Err(violation(
                    channel,
                    format!("unexpected {} frame during a cycle", other.kind()),
                ))
            }
        };
        if !(timestamp >= clock) || !timestamp.is_finite() {
            return Err(violation(channel, format!("timestamp {timestamp} went backwards")));
        }
        clock = timestamp;
        let home = world.homes.human.contains(position);
        if at_home && !home {
            outing = Some((clock, vec![last, position], None));
        } else if let Some((start, path, visited)) = outing.as_mut() {
            if visited.is_none() {
                path.push(position);
                let hit = pending_human.iter().copied().find(|t| {
                    human_finish[t.0].is_none() && world.objects[t.0].contains(position)
                });
                if let Some(t) = hit {
                    *visited = Some(t);
                    human_start[t.0] = Some(*start);
                    channel.send(&Frame::HumanTaskEvent {
                        task: t,
                        event: TaskEventKind::Start,
                        timestamp: *start,
                    })?;
                }
            }
            if home {
                if let Some(t) = *visited {
                    let d = clock - *start;
                    human_finish[t.0] = Some(clock);
                    human_durations.insert(t, d);
                    human_trajectories.insert(t, human_trajectory(path, d.max(f64::MIN_POSITIVE))?);
                    channel.send(&Frame::HumanTaskEvent {
                        task: t,
                        event: TaskEventKind::Finish,
                        timestamp: clock,
                    })?;
                }
                outing = None;
            }
        }
        at_home = home;
        last = position;

        let state = robot_state(plan, &task_set, robot_home, &human_finish, clock);
        min_distance = min_distance.min(position.dist(state.position));
        channel.send(&Frame::StateTick {
            clock,
            robot: state.position,
            robot_task: state.task,
        })?;
        let human_done = pending_human.iter().all(|t| human_finish[t.0].is_some());
        if human_done && state.done {
            let mut tasks = Vec::with_capacity(n);
            for i in 0..n {
                let t = TaskId(i);
                let rec = if pending_human.contains(&t) {
                    TaskRecord {
                        task: t,
                        agent: Agent::Human,
                        start: human_start[i].unwrap_or(0.0),
                        finish: human_finish[i].unwrap_or(clock),
                    }
                } else {
                    let finish = state.finished[i].unwrap_or(clock);
                    TaskRecord {
                        task: t,
                        agent: Agent::Robot,
                        start: finish - plan.robot_trajectories[&t].duration(),
                        finish,
                    }
                };
                tasks.push(rec);
            }
            let makespan = tasks.iter().map(|r| r.finish).fold(0.0, f64::max);
            return Ok(CycleObservation {
                human_durations,
                human_trajectories,
                robot_trajectories: plan.robot_trajectories.clone(),
                tasks,
                makespan,
                min_distance,
            });
        }
    }
}
