import pytest

from src.models import InstanceSpec, PlannerConfig
from src.services.pddl_parser import parse_domain, parse_problem
from src.services.warehouses import generate_instance

SHUTTLE_DOMAIN = """
; one robot carrying balls between rooms
(define (domain shuttle)
  (:requirements :strips :typing)
  (:types room ball - object)
  (:predicates
    (at-robot ?r - room)
    (at ?b - ball ?r - room)
    (holding ?b - ball)
    (handfree)
    (connected ?from - room ?to - room))
  (:action move
    :parameters (?from - room ?to - room)
    :precondition (and (at-robot ?from) (connected ?from ?to))
    :effect (and (at-robot ?to) (not (at-robot ?from))))
  (:action pick
    :parameters (?b - ball ?r - room)
    :precondition (and (at ?b ?r) (at-robot ?r) (handfree))
    :effect (and (holding ?b) (not (at ?b ?r)) (not (handfree))))
  (:action drop
    :parameters (?b - ball ?r - room)
    :precondition (and (holding ?b) (at-robot ?r))
    :effect (and (at ?b ?r) (handfree) (not (holding ?b)))))
"""

SHUTTLE_PROBLEM = """
(define (problem shuttle-1)
  (:domain shuttle)
  (:objects a b c - room b1 b2 - ball)
  (:init
    (at-robot a) (handfree)
    (at b1 a) (at b2 a)
    (connected a b) (connected b a) (connected b c) (connected c b))
  (:goal (and (at b1 c))))
"""

SHUTTLE_PLAN = """
(pick b1 a)
(move a b)
(move b c)
(drop b1 c)
"""


@pytest.fixture
def shuttle_domain():
    return parse_domain(SHUTTLE_DOMAIN)


@pytest.fixture
def shuttle(shuttle_domain):
    return parse_problem(SHUTTLE_PROBLEM, shuttle_domain)


@pytest.fixture
def tiny_spec():
    return InstanceSpec(num_packages=1, seed=0, forklifts=1, transports=1, gridsquares=3)


@pytest.fixture
def tiny_warehouse(tiny_spec):
    return generate_instance(tiny_spec)


@pytest.fixture
def quick_planner():
    return PlannerConfig(time_budget=30.0, node_budget=200_000)
